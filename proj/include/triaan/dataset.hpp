#pragma once

// Corpus import, seen/unseen speaker splitting, feature preparation and
// conversion pair generation.
//
// manifest.tsv columns (tab separated, one header line):
//   utterance_id  speaker_id  split  group  duration_s  audio_path  transcript_path
// where split is train/valid/test, group is seen/unseen and transcript_path is
// "-" when no transcript exists.

#include "triaan/features.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace triaan {

enum class Split { Train, Valid, Test };
enum class Scenario { S2S, U2U };

std::string to_string(Split s);
std::string to_string(Scenario s);
Split split_from_string(const std::string& s);
Scenario scenario_from_string(const std::string& s);

struct CorpusEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::filesystem::path audio_path;
  std::optional<std::filesystem::path> transcript_path;
  double duration = 0.0;
};

/// Every <dir>/<speaker>/*.wav, sorted by speaker then file name. A sibling
/// .txt with the same stem is taken as transcript.
std::vector<CorpusEntry> scan_corpus(const std::filesystem::path& dir);

struct ManifestRecord {
  CorpusEntry entry;
  Split split = Split::Train;
  bool unseen = false;
};

struct SplitConfig {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
  double unseen_speaker_fraction = 0.2;
  int min_unseen_speakers = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  void validate() const;
  std::vector<std::string> speakers(bool unseen) const;
  std::vector<const ManifestRecord*> select(Split split) const;
  const ManifestRecord& find(const std::string& utterance_id) const;

  void write_tsv(std::ostream& os) const;
  static DatasetManifest read_tsv(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

/// Seeded split. Unseen speakers never contribute to train; their utterances
/// go to valid and test. Seen speakers' utterances fill the remaining quotas
/// stratified per speaker.
DatasetManifest make_manifest(const std::vector<CorpusEntry>& corpus, const SplitConfig& config);

struct ConversionPair {
  Scenario scenario = Scenario::S2S;
  std::string source_id;
  std::vector<std::string> target_ids;  // k >= 1, one speaker
};

struct PairgenResult {
  std::vector<ConversionPair> pairs;
  std::vector<std::string> speakers;  // selected speaker pool, for the log
};

/// Pairs from the scenario's test pool: seen speakers (S2S) or unseen ones
/// (U2U). At most `max_speakers` speakers are drawn; source and target
/// speakers always differ.
PairgenResult pairgen(const DatasetManifest& manifest, Scenario scenario, std::size_t n_pairs,
                      std::uint64_t seed, int targets = 1, int max_speakers = 20);

void write_pairs(std::ostream& os, const std::vector<ConversionPair>& pairs);
std::vector<ConversionPair> read_pairs(std::istream& is);

struct PrepareConfig {
  SplitConfig split;
  int jobs = 1;  // feature extraction workers
};

/// Layout under `out_dir`: manifest.tsv, features.tsv, features/<utt>.feat.
DatasetManifest prepare(const std::filesystem::path& corpus_dir,
                        const std::filesystem::path& out_dir, const ModelConfig& model,
                        const PrepareConfig& config, std::ostream* log = nullptr);

std::filesystem::path feature_path(const std::filesystem::path& prepared_dir,
                                   const std::string& utterance_id);

/// Loads cached features of `split`, checking the frontend tag against `model`.
std::vector<UtteranceFeatures> load_split_features(const std::filesystem::path& prepared_dir,
                                                   const DatasetManifest& manifest, Split split,
                                                   const ModelConfig& model);

}  // namespace triaan
