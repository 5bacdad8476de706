#pragma once

// Objective metrics: WER/CER by edit distance over transcripts, and speaker
// verification acceptance with an EER-derived threshold over cosine scores.

#include "triaan/audio.hpp"

#include <algorithm>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace triaan {

/// Levenshtein distance with unit costs.
template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
  const std::size_t n = std::size(b);
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
  std::size_t i = 0;
  for (const auto& x : a) {
    cur[0] = ++i;
    std::size_t j = 0;
    for (const auto& y : b) {
      ++j;
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x == y ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

/// Uppercased, punctuation stripped, single-spaced.
std::string normalize_transcript(const std::string& raw);

struct Transcript {
  std::string text;

  Transcript() = default;
  /// Normalizes `raw`.
  explicit Transcript(const std::string& raw) : text(normalize_transcript(raw)) {}

  std::vector<std::string> words() const;
  /// Characters with spaces removed.
  std::string characters() const;
};

/// Word error rate; may exceed 1. Throws ValidationError on empty reference.
double wer(const Transcript& ref, const Transcript& hyp);
/// Character error rate over space-stripped characters.
double cer(const Transcript& ref, const Transcript& hyp);

double cosine_similarity(const Vec& u, const Vec& v);

struct ScorePair {
  std::vector<double> genuine;
  std::vector<double> impostor;

  void validate() const;
};

struct EerResult {
  double threshold = 0.0;
  double eer = 0.0;
  double far = 0.0;  // impostor scores >= threshold
  double frr = 0.0;  // genuine scores < threshold
};

/// Sweeps the sorted union of scores; minimizes |FAR - FRR|, lowest threshold
/// on ties.
EerResult eer_threshold(const ScorePair& scores);

/// Fraction of similarities >= threshold.
double sv_accept_rate(const std::vector<double>& similarities, double threshold);

/// Trials over labelled embeddings: every same-speaker pair is genuine, every
/// cross-speaker pair an impostor.
ScorePair build_trials(const std::vector<std::pair<std::string, Vec>>& embeddings);

// --- adapters --------------------------------------------------------------------

class TranscriptAdapter {
 public:
  virtual ~TranscriptAdapter() = default;
  virtual std::string name() const = 0;
  virtual Transcript transcribe(const RawAudio& audio) const = 0;
};

class EmbeddingAdapter {
 public:
  virtual ~EmbeddingAdapter() = default;
  virtual std::string name() const = 0;
  virtual Vec embed(const RawAudio& audio) const = 0;
};

/// Bundled embedder: per-bin mean and std of the log mel (160 values). Only
/// meant for self-contained tests; real evaluations need a trained SV model.
class MelStatEmbedder : public EmbeddingAdapter {
 public:
  std::string name() const override { return "mel_stats"; }
  Vec embed(const RawAudio& audio) const override;
  static Vec embed_mel(const Mat& log_mel);
};

/// Runs an external program: "{wav}" in the template is replaced by a temporary
/// WAV path; stdout is the transcript.
class CommandTranscriber : public TranscriptAdapter {
 public:
  explicit CommandTranscriber(std::string command) : command_(std::move(command)) {}
  std::string name() const override { return "command"; }
  Transcript transcribe(const RawAudio& audio) const override;

 private:
  std::string command_;
};

/// Same protocol as CommandTranscriber; stdout holds whitespace separated numbers.
class CommandEmbedder : public EmbeddingAdapter {
 public:
  explicit CommandEmbedder(std::string command) : command_(std::move(command)) {}
  std::string name() const override { return "command"; }
  Vec embed(const RawAudio& audio) const override;

 private:
  std::string command_;
};

/// "mel_stats" or "command:<template>". Throws ConfigError naming the fallback.
std::shared_ptr<const EmbeddingAdapter> make_embedding_adapter(const std::string& spec);
/// "command:<template>". "none" or empty throws ConfigError.
std::shared_ptr<const TranscriptAdapter> make_transcript_adapter(const std::string& spec);

// --- reports ---------------------------------------------------------------------

struct PairRow {
  std::string scenario;  // "s2s" or "u2u"
  std::string source_id;
  std::string target_id;
  std::optional<double> wer;
  std::optional<double> cer;
  double similarity = 0.0;
  bool accepted = false;
};

struct ScenarioSummary {
  std::string scenario;  // "S2S", "U2U" or "Avg"
  std::size_t pairs = 0;
  std::optional<double> wer;  // percent
  std::optional<double> cer;  // percent
  double sv = 0.0;            // acceptance percent
};

struct EvaluationReport {
  std::vector<PairRow> rows;
  EerResult eer;
  std::string embedder;
  std::vector<ScenarioSummary> summary() const;
};

/// Tab-separated per-pair rows with a header line.
void write_pairs_tsv(std::ostream& os, const EvaluationReport& report);
/// Tab-separated summary (scenario, pairs, WER, CER, SV).
void write_summary_tsv(std::ostream& os, const EvaluationReport& report);
/// Human readable table.
std::string format_summary_table(const EvaluationReport& report);

}  // namespace triaan
