#include "triaan/dataset.hpp"

#include "triaan/feature_cache.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace triaan {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

std::string to_string(Scenario s) { return s == Scenario::S2S ? "s2s" : "u2u"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split '" + s + "'");
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "s2s" || s == "S2S") return Scenario::S2S;
  if (s == "u2u" || s == "U2U") return Scenario::U2U;
  throw ConfigError("scenario must be 's2s' or 'u2u', got '" + s + "'");
}

std::vector<CorpusEntry> scan_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("corpus directory not found: " + dir.string());
  std::vector<fs::path> speakers;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) speakers.push_back(e.path());
  std::sort(speakers.begin(), speakers.end());

  std::vector<CorpusEntry> out;
  std::set<std::string> ids;
  for (const fs::path& sdir : speakers) {
    std::vector<fs::path> wavs;
    for (const auto& e : fs::directory_iterator(sdir))
      if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
    std::sort(wavs.begin(), wavs.end());
    for (const fs::path& w : wavs) {
      CorpusEntry c;
      c.utterance_id = w.stem().string();
      c.speaker_id = sdir.filename().string();
      c.audio_path = w;
      fs::path txt = w;
      txt.replace_extension(".txt");
      if (fs::exists(txt)) c.transcript_path = txt;
      const WavData wav = read_wav(w);
      c.duration = static_cast<double>(wav.frames()) / wav.sample_rate;
      if (!ids.insert(c.utterance_id).second)
        throw ValidationError("duplicate utterance id '" + c.utterance_id + "' in " +
                              dir.string());
      out.push_back(std::move(c));
    }
  }
  if (speakers.empty()) throw ValidationError("corpus has no speaker directories: " + dir.string());
  if (out.empty()) throw ValidationError("corpus has no .wav files: " + dir.string());
  return out;
}

void SplitConfig::validate() const {
  if (train <= 0 || valid < 0 || test <= 0 || std::abs(train + valid + test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be positive and sum to 1");
  if (unseen_speaker_fraction < 0 || unseen_speaker_fraction >= 1)
    throw ConfigError("unseen_speaker_fraction must lie in [0, 1)");
  if (min_unseen_speakers < 0) throw ConfigError("min_unseen_speakers must be >= 0");
}

void DatasetManifest::validate() const {
  require(!records.empty(), "manifest is empty");
  std::set<std::string> ids;
  std::map<std::string, bool> group;
  for (const ManifestRecord& r : records) {
    require(ids.insert(r.entry.utterance_id).second,
            "manifest lists utterance '" + r.entry.utterance_id + "' twice");
    auto [it, fresh] = group.emplace(r.entry.speaker_id, r.unseen);
    require(fresh || it->second == r.unseen,
            "speaker '" + r.entry.speaker_id + "' is both seen and unseen");
    require(!(r.unseen && r.split == Split::Train),
            "unseen speaker utterance '" + r.entry.utterance_id + "' in train split");
  }
}

std::vector<std::string> DatasetManifest::speakers(bool unseen) const {
  std::set<std::string> s;
  for (const ManifestRecord& r : records)
    if (r.unseen == unseen) s.insert(r.entry.speaker_id);
  return {s.begin(), s.end()};
}

std::vector<const ManifestRecord*> DatasetManifest::select(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const ManifestRecord& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

const ManifestRecord& DatasetManifest::find(const std::string& id) const {
  for (const ManifestRecord& r : records)
    if (r.entry.utterance_id == id) return r;
  throw ValidationError("utterance '" + id + "' not in manifest");
}

void DatasetManifest::write_tsv(std::ostream& os) const {
  os << "utterance_id\tspeaker_id\tsplit\tgroup\tduration_s\taudio_path\ttranscript_path\n";
  char dur[32];
  for (const ManifestRecord& r : records) {
    std::snprintf(dur, sizeof dur, "%.4f", r.entry.duration);
    os << r.entry.utterance_id << '\t' << r.entry.speaker_id << '\t' << to_string(r.split) << '\t'
       << (r.unseen ? "unseen" : "seen") << '\t' << dur << '\t' << r.entry.audio_path.string()
       << '\t' << (r.entry.transcript_path ? r.entry.transcript_path->string() : "-") << '\n';
  }
}

namespace {
std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, '\t')) out.push_back(cur);
  return out;
}
}  // namespace

DatasetManifest DatasetManifest::read_tsv(std::istream& is) {
  DatasetManifest m;
  std::string line;
  if (!std::getline(is, line) || line.rfind("utterance_id\t", 0) != 0)
    throw IoError("manifest: missing header line");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 7) throw IoError("manifest line " + std::to_string(lineno) + ": expected 7 fields");
    ManifestRecord r;
    r.entry.utterance_id = f[0];
    r.entry.speaker_id = f[1];
    r.split = split_from_string(f[2]);
    if (f[3] != "seen" && f[3] != "unseen")
      throw IoError("manifest line " + std::to_string(lineno) + ": bad group '" + f[3] + "'");
    r.unseen = f[3] == "unseen";
    r.entry.duration = std::stod(f[4]);
    r.entry.audio_path = f[5];
    if (f[6] != "-") r.entry.transcript_path = fs::path(f[6]);
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  write_tsv(out);
  if (!out) throw IoError("cannot write manifest " + path.string());
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return read_tsv(in);
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

}  // namespace

DatasetManifest make_manifest(const std::vector<CorpusEntry>& corpus, const SplitConfig& config) {
  config.validate();
  require(!corpus.empty(), "make_manifest: empty corpus");
  Rng rng(config.seed);

  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_speaker[corpus[i].speaker_id].push_back(i);
  std::vector<std::string> speakers;
  for (const auto& [s, _] : by_speaker) speakers.push_back(s);
  shuffle(speakers, rng);

  const std::size_t n = corpus.size();
  const std::size_t q_train = round_count(config.train * n);
  const std::size_t q_valid = round_count(config.valid * n);
  const std::size_t q_test = n - q_train - q_valid;

  // Unseen speakers: first of the shuffled order, shrunk until their
  // utterances fit into the valid and test quotas.
  std::size_t n_unseen = round_count(config.unseen_speaker_fraction * speakers.size());
  n_unseen = std::max<std::size_t>(n_unseen, static_cast<std::size_t>(config.min_unseen_speakers));
  auto unseen_utts = [&](std::size_t k) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < k; ++i) c += by_speaker[speakers[i]].size();
    return c;
  };
  while (n_unseen > 0 && (n_unseen >= speakers.size() || unseen_utts(n_unseen) > q_valid + q_test))
    --n_unseen;
  if (n_unseen < static_cast<std::size_t>(config.min_unseen_speakers)) n_unseen = 0;
  const std::size_t nu = unseen_utts(n_unseen);
  std::size_t u_test = std::min(q_test, (nu + 1) / 2);
  std::size_t u_valid = nu - u_test;
  if (u_valid > q_valid) {
    u_test += u_valid - q_valid;
    u_valid = q_valid;
  }

  DatasetManifest m;
  m.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.records[i].entry = corpus[i];

  std::vector<std::size_t> unseen_idx;
  for (std::size_t s = 0; s < n_unseen; ++s) {
    auto idx = by_speaker[speakers[s]];
    shuffle(idx, rng);
    unseen_idx.insert(unseen_idx.end(), idx.begin(), idx.end());
  }
  shuffle(unseen_idx, rng);
  for (std::size_t j = 0; j < unseen_idx.size(); ++j) {
    ManifestRecord& r = m.records[unseen_idx[j]];
    r.unseen = true;
    r.split = j < u_test ? Split::Test : Split::Valid;
  }

  // Seen utterances ordered by stratified within-speaker position so that
  // every quota takes a proportional share of each speaker.
  struct Ranked {
    double position;
    std::size_t speaker_rank;
    std::size_t index;
  };
  std::vector<Ranked> seen;
  for (std::size_t s = n_unseen; s < speakers.size(); ++s) {
    auto idx = by_speaker[speakers[s]];
    shuffle(idx, rng);
    for (std::size_t j = 0; j < idx.size(); ++j)
      seen.push_back({(static_cast<double>(j) + 0.5) / static_cast<double>(idx.size()), s, idx[j]});
  }
  std::sort(seen.begin(), seen.end(), [](const Ranked& a, const Ranked& b) {
    return a.position != b.position ? a.position < b.position : a.speaker_rank < b.speaker_rank;
  });
  const std::size_t s_train = std::min(q_train, seen.size());
  const std::size_t s_valid = std::min(q_valid - u_valid, seen.size() - s_train);
  for (std::size_t j = 0; j < seen.size(); ++j) {
    ManifestRecord& r = m.records[seen[j].index];
    r.unseen = false;
    r.split = j < s_train ? Split::Train : j < s_train + s_valid ? Split::Valid : Split::Test;
  }
  m.validate();
  return m;
}

PairgenResult pairgen(const DatasetManifest& manifest, Scenario scenario, std::size_t n_pairs,
                      std::uint64_t seed, int targets, int max_speakers) {
  manifest.validate();
  require(targets >= 1, "pairgen: targets must be >= 1");
  require(max_speakers >= 2, "pairgen: max_speakers must be >= 2");
  const bool unseen = scenario == Scenario::U2U;
  std::map<std::string, std::vector<std::string>> pool;
  for (const ManifestRecord& r : manifest.records)
    if (r.split == Split::Test && r.unseen == unseen)
      pool[r.entry.speaker_id].push_back(r.entry.utterance_id);
  if (pool.size() < 2)
    throw ValidationError("pairgen " + to_string(scenario) + ": test pool has " +
                          std::to_string(pool.size()) +
                          " speaker(s), need at least 2 (corpus too small for this scenario)");

  Rng rng(seed);
  PairgenResult res;
  for (const auto& [s, _] : pool) res.speakers.push_back(s);
  shuffle(res.speakers, rng);
  if (res.speakers.size() > static_cast<std::size_t>(max_speakers))
    res.speakers.resize(static_cast<std::size_t>(max_speakers));
  std::sort(res.speakers.begin(), res.speakers.end());

  const std::size_t ns = res.speakers.size();
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t src = rng.below(ns);
    std::size_t tgt = rng.below(ns - 1);
    if (tgt >= src) ++tgt;
    ConversionPair p;
    p.scenario = scenario;
    const auto& su = pool[res.speakers[src]];
    p.source_id = su[rng.below(su.size())];
    auto tu = pool[res.speakers[tgt]];
    shuffle(tu, rng);
    for (int k = 0; k < targets; ++k) p.target_ids.push_back(tu[static_cast<std::size_t>(k) % tu.size()]);
    res.pairs.push_back(std::move(p));
  }
  return res;
}

void write_pairs(std::ostream& os, const std::vector<ConversionPair>& pairs) {
  os << "scenario\tsource_id\ttarget_ids\n";
  for (const ConversionPair& p : pairs) {
    os << to_string(p.scenario) << '\t' << p.source_id << '\t';
    for (std::size_t k = 0; k < p.target_ids.size(); ++k) os << (k ? "," : "") << p.target_ids[k];
    os << '\n';
  }
}

std::vector<ConversionPair> read_pairs(std::istream& is) {
  std::vector<ConversionPair> out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("scenario\t", 0) != 0)
    throw IoError("pair list: missing header line");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3) throw IoError("pair list: expected 3 fields in '" + line + "'");
    ConversionPair p;
    p.scenario = scenario_from_string(f[0]);
    p.source_id = f[1];
    std::istringstream t(f[2]);
    for (std::string id; std::getline(t, id, ',');) p.target_ids.push_back(id);
    if (p.target_ids.empty()) throw IoError("pair list: no targets in '" + line + "'");
    out.push_back(std::move(p));
  }
  return out;
}

fs::path feature_path(const fs::path& prepared_dir, const std::string& utterance_id) {
  return prepared_dir / "features" / (utterance_id + ".feat");
}

DatasetManifest prepare(const fs::path& corpus_dir, const fs::path& out_dir,
                        const ModelConfig& model, const PrepareConfig& config, std::ostream* log) {
  const DatasetManifest manifest = make_manifest(scan_corpus(corpus_dir), config.split);
  const FrontendSelector frontend = frontend_for(model);
  const std::string tag = frontend_tag(model);
  fs::create_directories(out_dir / "features");

  const std::size_t n = manifest.records.size();
  std::vector<Eigen::Index> frames(n, 0), channels(n, 0);
  std::vector<std::string> warnings(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      const ManifestRecord& r = manifest.records[i];
      UtteranceFeatures u = extract_utterance_features(load_audio(r.entry.audio_path), frontend);
      u.utterance_id = r.entry.utterance_id;
      u.speaker_id = r.entry.speaker_id;
      write_features(feature_path(out_dir, u.utterance_id), u, tag);
      frames[i] = u.frames();
      channels[i] = u.content.channels();
      if (u.pitch.all_unvoiced) warnings[i] = "no voiced frames in " + u.utterance_id;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(config.jobs, 1)), 1, n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += jobs) work(i);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (log && !warnings[i].empty()) *log << "warning: " << warnings[i] << '\n';
  }

  manifest.save(out_dir / "manifest.tsv");
  std::ofstream ft(out_dir / "features.tsv");
  ft << "utterance_id\tspeaker_id\tsplit\tframes\tcontent_dim\tfrontend\n";
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestRecord& r = manifest.records[i];
    ft << r.entry.utterance_id << '\t' << r.entry.speaker_id << '\t' << to_string(r.split) << '\t'
       << frames[i] << '\t' << channels[i] << '\t' << tag << '\n';
  }
  if (!ft) throw IoError("cannot write features.tsv in " + out_dir.string());
  if (log) {
    std::size_t counts[3] = {0, 0, 0};
    for (const ManifestRecord& r : manifest.records) ++counts[static_cast<int>(r.split)];
    *log << "prepared " << n << " utterances: train=" << counts[0] << " valid=" << counts[1]
         << " test=" << counts[2] << " unseen_speakers=" << manifest.speakers(true).size() << '\n';
  }
  return manifest;
}

std::vector<UtteranceFeatures> load_split_features(const fs::path& prepared_dir,
                                                   const DatasetManifest& manifest, Split split,
                                                   const ModelConfig& model) {
  const std::string tag = frontend_tag(model);
  std::vector<UtteranceFeatures> out;
  for (const ManifestRecord* r : manifest.select(split)) {
    CachedFeatures c = read_features(feature_path(prepared_dir, r->entry.utterance_id));
    if (c.frontend_tag != tag)
      throw ValidationError("feature cache for '" + r->entry.utterance_id + "' was built with '" +
                            c.frontend_tag + "' but the model uses '" + tag +
                            "'; re-run prepare with the matching --frontend");
    out.push_back(std::move(c.features));
  }
  return out;
}

}  // namespace triaan
