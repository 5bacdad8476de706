#pragma once

// Command-level glue shared by the CLI and the Python module: configuration
// files, training runs, conversion jobs and evaluation.

#include "triaan/dataset.hpp"
#include "triaan/evaluation.hpp"
#include "triaan/training.hpp"
#include "triaan/vocoder.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace triaan {

struct ConvertOptions {
  std::string vocoder = "griffin_lim";  // or "adapter"
  std::string vocoder_command;          // "prog {mel} {wav}" for the adapter
  int griffin_lim_iterations = 32;
};

struct EvaluateOptions {
  std::size_t pairs = 20;
  int max_speakers = 20;
  std::string embedder = "mel_stats";
  std::string asr = "none";
};

/// Everything a command may need. File layout:
///   {"profile": "desk"|"full", "seed": n, "model": {...}, "train": {...},
///    "split": {...}, "jobs": n, "convert": {...}, "evaluate": {...}}
/// "profile" picks the defaults, other keys override them field by field.
struct AppConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  ModelConfig model = ModelConfig::desk();
  TrainConfig train = TrainConfig::desk();
  SplitConfig split;
  int jobs = 1;
  ConvertOptions convert;
  EvaluateOptions evaluate;

  static AppConfig for_profile(const std::string& profile);
  /// Propagates `seed` to training and splitting.
  void set_seed(std::uint64_t seed);
  void validate() const;
};

nlohmann::json to_json(const AppConfig& c);
AppConfig app_config_from_json(const nlohmann::json& j);
AppConfig load_app_config(const std::filesystem::path& path);

// --- training ------------------------------------------------------------------------

struct TrainRunResult {
  TrainResult train;
  std::filesystem::path checkpoint;
};

/// Trains from a prepared directory and writes the checkpoint. When `resume`
/// names a checkpoint its weights and optimizer state are continued.
TrainRunResult run_training(const std::filesystem::path& prepared_dir, const AppConfig& config,
                            const std::filesystem::path& checkpoint_out,
                            std::ostream* log = nullptr,
                            const std::optional<std::filesystem::path>& resume = std::nullopt);

// --- conversion ----------------------------------------------------------------------

struct ConversionJob {
  std::filesystem::path source;
  std::vector<std::filesystem::path> targets;  // k >= 1
  std::filesystem::path checkpoint;
  std::filesystem::path output;  // stem: writes <output>.wav and <output>.npy
  std::optional<Frontend> frontend;  // requested frontend, checked against the checkpoint
  ConvertOptions options;

  void validate() const;
};

struct ConversionOutput {
  Mat mel;                      // 80 x T_source
  std::vector<double> samples;  // 16 kHz
  std::filesystem::path wav_path;
  std::filesystem::path mel_path;
};

/// Raises ValidationError when the requested frontend differs from the one
/// the checkpoint was trained with.
void check_frontend(const ModelConfig& trained, std::optional<Frontend> requested);

/// Converted log mel from extracted features.
Mat convert_features(const Model& model, const UtteranceFeatures& source,
                     const std::vector<UtteranceFeatures>& targets);

ConversionOutput convert(const ConversionJob& job);

// --- evaluation ----------------------------------------------------------------------

struct EvaluateRun {
  std::filesystem::path prepared_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir;
  std::vector<Scenario> scenarios = {Scenario::S2S, Scenario::U2U};
  int targets = 1;
  bool write_audio = true;
};

/// Generates pairs, converts them, scores them and writes pairs.tsv,
/// summary.tsv and summary.txt into out_dir.
EvaluationReport run_evaluation(const EvaluateRun& run, const AppConfig& config,
                                std::ostream* log = nullptr);

}  // namespace triaan
