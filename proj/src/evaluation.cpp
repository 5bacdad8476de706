#include "triaan/evaluation.hpp"

#include "triaan/features.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include <unistd.h>

namespace triaan {

std::string normalize_transcript(const std::string& raw) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else if (!std::ispunct(c)) {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::toupper(c)));
    }
  }
  return out;
}

std::vector<std::string> Transcript::words() const {
  std::vector<std::string> w;
  std::istringstream in(text);
  for (std::string tok; in >> tok;) w.push_back(tok);
  return w;
}

std::string Transcript::characters() const {
  std::string c;
  for (char ch : text)
    if (ch != ' ') c.push_back(ch);
  return c;
}

double wer(const Transcript& ref, const Transcript& hyp) {
  const auto r = ref.words();
  require(!r.empty(), "wer: empty reference transcript");
  return static_cast<double>(edit_distance(r, hyp.words())) / static_cast<double>(r.size());
}

double cer(const Transcript& ref, const Transcript& hyp) {
  const auto r = ref.characters();
  require(!r.empty(), "cer: empty reference transcript");
  return static_cast<double>(edit_distance(r, hyp.characters())) / static_cast<double>(r.size());
}

double cosine_similarity(const Vec& u, const Vec& v) {
  require(u.size() == v.size(), "cosine_similarity: length mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  require(nu > 0.0 && nv > 0.0, "cosine_similarity: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

void ScorePair::validate() const {
  require(!genuine.empty() && !impostor.empty(),
          "ScorePair: genuine and impostor lists must both be non-empty");
  for (const auto* list : {&genuine, &impostor})
    for (double s : *list)
      require(std::isfinite(s) && s >= -1.0 - 1e-12 && s <= 1.0 + 1e-12,
              "ScorePair: score outside [-1, 1]");
}

EerResult eer_threshold(const ScorePair& scores) {
  scores.validate();
  std::vector<double> g = scores.genuine;
  std::vector<double> im = scores.impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> candidates(g);
  candidates.insert(candidates.end(), im.begin(), im.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const double ng = static_cast<double>(g.size());
  const double ni = static_cast<double>(im.size());
  EerResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double theta : candidates) {
    const auto below_g = std::lower_bound(g.begin(), g.end(), theta) - g.begin();
    const auto below_i = std::lower_bound(im.begin(), im.end(), theta) - im.begin();
    const double frr = static_cast<double>(below_g) / ng;
    const double far = static_cast<double>(im.size() - static_cast<std::size_t>(below_i)) / ni;
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = {theta, (far + frr) / 2.0, far, frr};
    }
  }
  return best;
}

double sv_accept_rate(const std::vector<double>& similarities, double threshold) {
  require(!similarities.empty(), "sv_accept_rate: empty list");
  const auto n = std::count_if(similarities.begin(), similarities.end(),
                               [threshold](double s) { return s >= threshold; });
  return static_cast<double>(n) / static_cast<double>(similarities.size());
}

ScorePair build_trials(const std::vector<std::pair<std::string, Vec>>& embeddings) {
  ScorePair p;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      const double s = cosine_similarity(embeddings[i].second, embeddings[j].second);
      (embeddings[i].first == embeddings[j].first ? p.genuine : p.impostor).push_back(s);
    }
  return p;
}

// --- adapters ----------------------------------------------------------------------

Vec MelStatEmbedder::embed_mel(const Mat& log_mel) {
  require(log_mel.cols() > 0, "MelStatEmbedder: empty mel");
  const Vec mean = log_mel.rowwise().mean();
  const Vec std =
      ((log_mel.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
  Vec out(2 * log_mel.rows());
  out << mean, std;
  return out;
}

Vec MelStatEmbedder::embed(const RawAudio& audio) const {
  return embed_mel(extract_mel(audio).data);
}

namespace {

std::filesystem::path temp_wav() {
  static std::atomic<unsigned> counter{0};
  return std::filesystem::temp_directory_path() /
         ("triaan_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".wav");
}

std::string run_on_audio(const std::string& tmpl, const RawAudio& audio) {
  const auto wav = temp_wav();
  write_wav(wav, audio.samples, audio.sample_rate);
  std::string cmd = tmpl;
  const auto pos = cmd.find("{wav}");
  const std::string quoted = "'" + wav.string() + "'";
  if (pos == std::string::npos)
    cmd += " " + quoted;
  else
    cmd.replace(pos, 5, quoted);

  std::string out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(::popen(cmd.c_str(), "r"), ::pclose);
  if (!pipe) {
    std::filesystem::remove(wav);
    throw ConfigError("cannot run adapter command: " + cmd);
  }
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe.get())) out.append(buf, n);
  const int status = ::pclose(pipe.release());
  std::filesystem::remove(wav);
  if (status != 0) throw ConfigError("adapter command failed (status " + std::to_string(status) +
                                     "): " + cmd);
  return out;
}

}  // namespace

Transcript CommandTranscriber::transcribe(const RawAudio& audio) const {
  return Transcript(run_on_audio(command_, audio));
}

Vec CommandEmbedder::embed(const RawAudio& audio) const {
  std::istringstream in(run_on_audio(command_, audio));
  std::vector<double> vals;
  for (double v; in >> v;) vals.push_back(v);
  if (vals.empty()) throw ConfigError("embedding command produced no numbers: " + command_);
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::shared_ptr<const EmbeddingAdapter> make_embedding_adapter(const std::string& spec) {
  if (spec.empty() || spec == "mel_stats") return std::make_shared<MelStatEmbedder>();
  if (spec.rfind("command:", 0) == 0) return std::make_shared<CommandEmbedder>(spec.substr(8));
  throw ConfigError("unknown speaker embedder '" + spec +
                    "'; use 'command:<program {wav}>' or the bundled fallback 'mel_stats'");
}

std::shared_ptr<const TranscriptAdapter> make_transcript_adapter(const std::string& spec) {
  if (spec.rfind("command:", 0) == 0) return std::make_shared<CommandTranscriber>(spec.substr(8));
  throw ConfigError("no ASR adapter configured ('" + spec +
                    "'); use 'command:<program {wav}>', or 'none' to report SV only");
}

// --- reports -----------------------------------------------------------------------

std::vector<ScenarioSummary> EvaluationReport::summary() const {
  std::vector<ScenarioSummary> out;
  for (const char* sc : {"s2s", "u2u"}) {
    ScenarioSummary s;
    s.scenario = sc[0] == 's' ? "S2S" : "U2U";
    double w = 0, c = 0, a = 0;
    std::size_t nw = 0;
    for (const PairRow& r : rows) {
      if (r.scenario != sc) continue;
      ++s.pairs;
      a += r.accepted ? 1.0 : 0.0;
      if (r.wer && r.cer) {
        w += *r.wer;
        c += *r.cer;
        ++nw;
      }
    }
    if (s.pairs == 0) continue;
    s.sv = 100.0 * a / static_cast<double>(s.pairs);
    if (nw > 0) {
      s.wer = 100.0 * w / static_cast<double>(nw);
      s.cer = 100.0 * c / static_cast<double>(nw);
    }
    out.push_back(s);
  }
  if (!out.empty()) {
    ScenarioSummary avg;
    avg.scenario = "Avg";
    double sv = 0, w = 0, c = 0;
    bool have_text = true;
    for (const auto& s : out) {
      avg.pairs += s.pairs;
      sv += s.sv;
      have_text = have_text && s.wer.has_value();
      if (s.wer) {
        w += *s.wer;
        c += *s.cer;
      }
    }
    const double n = static_cast<double>(out.size());
    avg.sv = sv / n;
    if (have_text) {
      avg.wer = w / n;
      avg.cer = c / n;
    }
    out.push_back(avg);
  }
  return out;
}

namespace {
std::string num(std::optional<double> v, const char* fmt = "%.17g", const char* missing = "NA") {
  if (!v) return missing;
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}
}  // namespace

void write_pairs_tsv(std::ostream& os, const EvaluationReport& report) {
  os << "scenario\tsource_id\ttarget_id\twer\tcer\tsimilarity\taccepted\n";
  for (const PairRow& r : report.rows)
    os << r.scenario << '\t' << r.source_id << '\t' << r.target_id << '\t' << num(r.wer) << '\t'
       << num(r.cer) << '\t' << num(r.similarity) << '\t' << (r.accepted ? 1 : 0) << '\n';
}

void write_summary_tsv(std::ostream& os, const EvaluationReport& report) {
  os << "scenario\tpairs\twer\tcer\tsv\n";
  for (const auto& s : report.summary())
    os << s.scenario << '\t' << s.pairs << '\t' << num(s.wer) << '\t' << num(s.cer) << '\t'
       << num(s.sv) << '\n';
}

std::string format_summary_table(const EvaluationReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %6s %9s %9s %9s\n", "", "pairs", "WER(%)", "CER(%)",
                "SV(%)");
  os << line;
  for (const auto& s : report.summary()) {
    std::snprintf(line, sizeof line, "%-8s %6zu %9s %9s %9s\n", s.scenario.c_str(), s.pairs,
                  num(s.wer, "%.2f", "n/a").c_str(), num(s.cer, "%.2f", "n/a").c_str(),
                  num(s.sv, "%.2f").c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "threshold %.4f (EER %.2f%%, embedder %s)\n",
                report.eer.threshold, 100.0 * report.eer.eer, report.embedder.c_str());
  os << line;
  return os.str();
}

}  // namespace triaan
