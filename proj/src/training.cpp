#include "triaan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace triaan {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("TrainConfig.batch_size must be positive");
  if (epochs <= 0) throw ConfigError("TrainConfig.epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("TrainConfig: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("TrainConfig.adam_eps must be positive");
  if (crop_frames <= 0) throw ConfigError("TrainConfig.crop_frames must be positive");
  if (!(mask_max_fraction >= 0.0 && mask_max_fraction < 1.0))
    throw ConfigError("TrainConfig.mask_max_fraction must lie in [0, 1)");
  if (log_every == 0) throw ConfigError("TrainConfig.log_every must be positive");
}

TrainConfig TrainConfig::full() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 50;
  c.learning_rate = 5e-4;
  return c;
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"max_steps", c.max_steps},
           {"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"crop_frames", c.crop_frames},
           {"mask_max_fraction", c.mask_max_fraction},
           {"seed", c.seed},
           {"log_every", c.log_every},
           {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const json& j, TrainConfig& c) {
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) j.at(key).get_to(dst);
  };
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("max_steps", c.max_steps);
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_eps", c.adam_eps);
  get("crop_frames", c.crop_frames);
  get("mask_max_fraction", c.mask_max_fraction);
  get("seed", c.seed);
  get("log_every", c.log_every);
  get("checkpoint_every", c.checkpoint_every);
}

// --- losses ------------------------------------------------------------------

double l1_loss(const Mat& y, const Mat& y_hat) {
  require(y.rows() == y_hat.rows() && y.cols() == y_hat.cols(),
          "l1_loss: shape mismatch " + shape_str(y) + " vs " + shape_str(y_hat));
  require(y.cols() > 0, "l1_loss: empty input");
  return (y - y_hat).cwiseAbs().sum() / static_cast<double>(y.cols());
}

LossBundle combined_loss(const Mat& y, const Mat& y_hat, const Mat& y_siam) {
  LossBundle b;
  b.recon = l1_loss(y, y_hat);
  b.siam_recon = l1_loss(y, y_siam);
  b.consistency = l1_loss(y_hat, y_siam);
  b.total = (b.recon + b.siam_recon) / 2.0 + b.consistency;
  return b;
}

namespace diff {

ad::Var l1_loss(ad::Var y, ad::Var y_hat) {
  require(y.rows() == y_hat.rows() && y.cols() == y_hat.cols(),
          "l1_loss: shape mismatch " + shape_str(y.value()) + " vs " + shape_str(y_hat.value()));
  return ad::scale(ad::abs_sum(ad::sub(y, y_hat)), 1.0 / static_cast<double>(y.cols()));
}

LossNodes combined_loss(ad::Var y, ad::Var y_hat, ad::Var y_siam) {
  LossNodes n;
  n.recon = l1_loss(y, y_hat);
  n.siam_recon = l1_loss(y, y_siam);
  n.consistency = l1_loss(y_hat, y_siam);
  n.total = ad::add(ad::scale(ad::add(n.recon, n.siam_recon), 0.5), n.consistency);
  return n;
}

}  // namespace diff

// --- masking -------------------------------------------------------------------

MaskSpan draw_mask_span(Eigen::Index frames, double max_fraction, Rng& rng) {
  require(max_fraction >= 0.0 && max_fraction < 1.0, "time_mask: max_fraction must lie in [0, 1)");
  const auto max_len = static_cast<std::uint64_t>(std::floor(max_fraction * frames));
  MaskSpan s;
  s.length = static_cast<Eigen::Index>(rng.below(max_len + 1));
  s.start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(frames - s.length) + 1));
  return s;
}

Mat apply_mask(const Mat& x, MaskSpan span) {
  require(span.start >= 0 && span.length >= 0 && span.start + span.length <= x.cols(),
          "apply_mask: span outside input");
  Mat out = x;
  out.middleCols(span.start, span.length).setZero();
  return out;
}

Mat time_mask(const Mat& x, double max_fraction, Rng& rng) {
  return apply_mask(x, draw_mask_span(x.cols(), max_fraction, rng));
}

// --- training step -------------------------------------------------------------

TrainingSample crop_sample(const UtteranceFeatures& u, int frames, Rng& rng) {
  u.validate();
  const Eigen::Index t = u.frames();
  const Eigen::Index len = std::min<Eigen::Index>(frames, t);
  const auto start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(t - len) + 1));
  return {u.content.data.middleCols(start, len), u.pitch.log_f0.segment(start, len),
          u.mel.data.middleCols(start, len)};
}

StepResult compute_gradients(const Model& model, const std::vector<TrainingSample>& batch,
                             double mask_max_fraction, Rng& rng, std::vector<Mat>& grads) {
  require(!batch.empty(), "train_step: empty batch");
  grads = model.weights().zeros_like();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  StepResult r;
  for (const TrainingSample& s : batch) {
    require(s.content.cols() == s.mel.cols() && s.log_f0.size() == s.mel.cols(),
            "train_step: sample streams differ in length");
    require(s.mel.rows() == model.config().mel_bins, "train_step: mel bins do not match config");
    const MaskSpan span = draw_mask_span(s.content.cols(), mask_max_fraction, rng);

    ad::Graph g;
    WeightBinder w(g, model.weights());
    const auto pyramid = model.build_speaker_pyramid(w, {s.content});
    ad::Var pitch = g.constant(s.log_f0.transpose());
    const ForwardNodes clean = model.build_forward(w, g.constant(s.content), pitch, pyramid);
    const ForwardNodes masked =
        model.build_forward(w, g.constant(apply_mask(s.content, span)), pitch, pyramid);
    const diff::LossNodes loss = diff::combined_loss(g.constant(s.mel), clean.mel, masked.mel);

    const double total = loss.total.value()(0, 0);
    if (!std::isfinite(total))
      throw TrainingError("non-finite loss (recon=" + std::to_string(loss.recon.value()(0, 0)) +
                          ", siam_recon=" + std::to_string(loss.siam_recon.value()(0, 0)) +
                          ", consistency=" + std::to_string(loss.consistency.value()(0, 0)) +
                          ") on a " + std::to_string(s.mel.cols()) + "-frame sample");
    r.loss.recon += inv_b * loss.recon.value()(0, 0);
    r.loss.siam_recon += inv_b * loss.siam_recon.value()(0, 0);
    r.loss.consistency += inv_b * loss.consistency.value()(0, 0);
    r.loss.total += inv_b * total;

    g.backward(ad::scale(loss.total, inv_b));
    g.accumulate_leaf_grads(grads);
  }
  double sq = 0.0;
  for (const Mat& gm : grads) sq += gm.squaredNorm();
  r.grad_norm = std::sqrt(sq);
  if (!std::isfinite(r.grad_norm)) throw TrainingError("non-finite gradient norm");
  return r;
}

void adam_update(Weights& weights, AdamState& state, const std::vector<Mat>& grads,
                 const TrainConfig& config) {
  require(grads.size() == weights.size(), "adam_update: gradient count mismatch");
  if (state.empty()) {
    state.m = weights.zeros_like();
    state.v = weights.zeros_like();
  }
  require(state.m.size() == weights.size() && state.v.size() == weights.size(),
          "adam_update: optimizer state does not match weights");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grads[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grads[i].cwiseProduct(grads[i]);
    weights.value(i).array() -=
        config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
  }
}

StepResult train_step(Model& model, AdamState& state, const std::vector<TrainingSample>& batch,
                      const TrainConfig& config, Rng& rng) {
  std::vector<Mat> grads;
  const StepResult r = compute_gradients(model, batch, config.mask_max_fraction, rng, grads);
  adam_update(model.weights(), state, grads, config);
  return r;
}

// --- loop --------------------------------------------------------------------------

namespace {

// Independent stream per (purpose, index) so a resumed run replays exactly.
Rng derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  Rng mix(seed ^ (stream * 0x9E3779B97F4A7C15ULL));
  const std::uint64_t base = mix.next_u64();
  Rng r(base + index * 0xD1B54A32D192ED03ULL);
  r.next_u64();
  return r;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derived_rng(seed, 1, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

std::string format_train_record(const TrainRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "step=%llu recon=%.17g siam_recon=%.17g consistency=%.17g total=%.17g "
                "grad_norm=%.17g wall=%.3f",
                static_cast<unsigned long long>(r.step), r.loss.recon, r.loss.siam_recon,
                r.loss.consistency, r.loss.total, r.grad_norm, r.wall_seconds);
  return buf;
}

Checkpoint make_checkpoint(const Model& model, const AdamState& state, const TrainConfig& config) {
  Checkpoint c;
  c.config = model.config();
  c.weights = model.weights();
  c.optimizer = state;
  c.step = state.step;
  c.metadata.created = utc_timestamp();
  c.train_config = config;
  return c;
}

TrainResult train(Model& model, const std::vector<UtteranceFeatures>& data,
                  const TrainConfig& config, const TrainHooks& hooks,
                  std::optional<AdamState> resume) {
  config.validate();
  require(!data.empty(), "train: no training utterances");
  for (const UtteranceFeatures& u : data) {
    u.validate();
    require(u.content.channels() == model.config().content_dim,
            "train: utterance '" + u.utterance_id + "' has " +
                std::to_string(u.content.channels()) + " content channels, model expects " +
                std::to_string(model.config().content_dim));
  }

  TrainResult result;
  if (resume) result.optimizer = std::move(*resume);
  const std::size_t n = data.size();
  const std::size_t b = static_cast<std::size_t>(config.batch_size);
  const std::uint64_t per_epoch = (n + b - 1) / b;
  std::uint64_t total = per_epoch * static_cast<std::uint64_t>(config.epochs);
  if (config.max_steps > 0) total = std::min(total, config.max_steps);

  const auto t0 = std::chrono::steady_clock::now();
  auto save = [&]() {
    if (hooks.checkpoint_path)
      save_checkpoint(*hooks.checkpoint_path, make_checkpoint(model, result.optimizer, config));
  };

  for (std::uint64_t step = result.optimizer.step; step < total; ++step) {
    const std::uint64_t epoch = step / per_epoch;
    const std::size_t first = static_cast<std::size_t>(step % per_epoch) * b;
    const auto order = epoch_order(n, config.seed, epoch);
    Rng rng = derived_rng(config.seed, 2, step);
    std::vector<TrainingSample> batch;
    for (std::size_t i = first; i < std::min(n, first + b); ++i)
      batch.push_back(crop_sample(data[order[i]], config.crop_frames, rng));

    StepResult r;
    try {
      r = train_step(model, result.optimizer, batch, config, rng);
    } catch (const TrainingError& e) {
      throw TrainingError("step " + std::to_string(step + 1) + ": " + e.what());
    }
    TrainRecord rec;
    rec.step = result.optimizer.step;
    rec.loss = r.loss;
    rec.grad_norm = r.grad_norm;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(rec);
    if (hooks.log && (rec.step % config.log_every == 0 || step + 1 == total))
      *hooks.log << format_train_record(rec) << '\n' << std::flush;
    if (hooks.on_step) hooks.on_step(rec);
    if (config.checkpoint_every > 0 && rec.step % config.checkpoint_every == 0) save();
  }
  result.steps = result.optimizer.step;
  save();
  return result;
}

}  // namespace triaan
