#pragma once

// Reconstruction losses, time masking and the self-reconstruction trainer
// with its masked (siamese) second branch.

#include "triaan/checkpoint.hpp"
#include "triaan/features.hpp"
#include "triaan/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>

namespace triaan {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 400;
  std::uint64_t max_steps = 0;  // 0 = run all epochs
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int crop_frames = 128;
  double mask_max_fraction = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 1;
  std::uint64_t checkpoint_every = 0;  // 0 = only at the end

  void validate() const;
  bool operator==(const TrainConfig&) const = default;

  static TrainConfig full();
  static TrainConfig desk();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossBundle {
  double recon = 0.0;
  double siam_recon = 0.0;
  double consistency = 0.0;
  double total = 0.0;
};

/// ||y - y_hat||_1 / T.
double l1_loss(const Mat& y, const Mat& y_hat);
/// total = (l1(y, y_hat) + l1(y, y_siam)) / 2 + l1(y_hat, y_siam).
LossBundle combined_loss(const Mat& y, const Mat& y_hat, const Mat& y_siam);

namespace diff {

ad::Var l1_loss(ad::Var y, ad::Var y_hat);

struct LossNodes {
  ad::Var recon, siam_recon, consistency, total;
};
LossNodes combined_loss(ad::Var y, ad::Var y_hat, ad::Var y_siam);

}  // namespace diff

struct MaskSpan {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

/// Length ~ U{0..floor(max_fraction*T)}, start uniform over valid positions.
MaskSpan draw_mask_span(Eigen::Index frames, double max_fraction, Rng& rng);
/// Zeroes one contiguous span of columns in every row.
Mat apply_mask(const Mat& x, MaskSpan span);
Mat time_mask(const Mat& x, double max_fraction, Rng& rng);

/// One self-reconstruction example: content and speaker input come from the
/// same crop.
struct TrainingSample {
  Mat content;  // H x T
  Vec log_f0;   // T
  Mat mel;      // M x T
};

/// Random contiguous crop of `frames` (whole utterance when shorter).
TrainingSample crop_sample(const UtteranceFeatures& u, int frames, Rng& rng);

struct StepResult {
  LossBundle loss;        // batch mean
  double grad_norm = 0.0; // L2 norm of the averaged gradient
};

/// Adds bias-corrected Adam state update; allocates moments on first use.
void adam_update(Weights& weights, AdamState& state, const std::vector<Mat>& grads,
                 const TrainConfig& config);

/// Averaged loss gradient over the batch. Each sample runs a clean and a
/// time-masked forward sharing one speaker pyramid.
StepResult compute_gradients(const Model& model, const std::vector<TrainingSample>& batch,
                             double mask_max_fraction, Rng& rng, std::vector<Mat>& grads);

/// Gradients then one Adam update. Throws TrainingError on non-finite loss or
/// gradient without touching the weights.
StepResult train_step(Model& model, AdamState& state, const std::vector<TrainingSample>& batch,
                      const TrainConfig& config, Rng& rng);

struct TrainRecord {
  std::uint64_t step = 0;
  LossBundle loss;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
};

/// Machine-parsable key=value line (losses printed round-trip exact).
std::string format_train_record(const TrainRecord& r);

struct TrainHooks {
  std::ostream* log = nullptr;
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const TrainRecord&)> on_step;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  AdamState optimizer;
  std::uint64_t steps = 0;
};

/// Epoch loop over `data` with per-epoch seeded shuffling. Starts from the
/// optimizer state in `resume` when given.
TrainResult train(Model& model, const std::vector<UtteranceFeatures>& data,
                  const TrainConfig& config, const TrainHooks& hooks = {},
                  std::optional<AdamState> resume = std::nullopt);

/// Checkpoint bundle for the current model and optimizer.
Checkpoint make_checkpoint(const Model& model, const AdamState& state,
                           const TrainConfig& config);

}  // namespace triaan
