#include "triaan/check.hpp"

#include "triaan/checkpoint.hpp"
#include "triaan/dataset.hpp"
#include "triaan/evaluation.hpp"
#include "triaan/normkernels.hpp"
#include "triaan/oracles.hpp"
#include "triaan/pipeline.hpp"
#include "triaan/synth.hpp"
#include "triaan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace triaan::check {

namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

AttentionParams random_attention(Eigen::Index c, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  return {rng.normal_matrix(c, c, s), rng.normal_matrix(c, c, s), rng.normal_matrix(c, c, s)};
}

PoolingParams random_pooling(Eigen::Index c, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  return {rng.normal_matrix(c, c, s), rng.normal_matrix(c, c, s)};
}

TriaanBlockParams random_block(Eigen::Index c, Rng& rng) {
  TriaanBlockParams p;
  p.duan_in = random_attention(c, rng);
  p.duan_tin = random_attention(c, rng);
  p.fuse_w = rng.normal_matrix(c, 2 * c, 1.0 / std::sqrt(2.0 * c));
  p.fuse_b = rng.normal_matrix(c, 1, 0.1);
  p.glan = random_pooling(c, rng);
  return p;
}

// Random map with a per-matrix offset and scale so normalization has work to do.
Mat shifted_normal(Eigen::Index r, Eigen::Index c, Rng& rng) {
  const double scale = rng.uniform(0.5, 4.0);
  const double offset = rng.uniform(-3.0, 3.0);
  return (rng.normal_matrix(r, c, scale).array() + offset).matrix();
}

double simplex_error_rows(const Mat& w) {
  double err = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    err = std::max(err, std::abs(w.row(i).sum() - 1.0));
    err = std::max(err, std::max(0.0, -w.row(i).minCoeff()));
  }
  return err;
}

UtteranceFeatures mel_features(const std::vector<double>& samples, const std::string& id,
                               const std::string& speaker) {
  RawAudio audio;
  audio.samples = samples;
  UtteranceFeatures u = extract_utterance_features(audio, FrontendSelector{Frontend::Mel, nullptr});
  u.utterance_id = id;
  u.speaker_id = speaker;
  return u;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

// --- 1 -------------------------------------------------------------------------------

CheckResult kernel_invariants(int seeds) {
  Stopwatch sw;
  CheckResult r{"1", "kernel invariants", false, "", 0.0};
  double norm_mean = 0, norm_std = 0, simplex = 0, var_identity = 0, oracle = 0, glan_bound = 0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + static_cast<std::uint64_t>(s));
    const Eigen::Index c = 4 + static_cast<Eigen::Index>(rng.below(13));
    const Eigen::Index t = 6 + static_cast<Eigen::Index>(rng.below(25));
    const Eigen::Index ts = 6 + static_cast<Eigen::Index>(rng.below(25));
    const int layers = 1 + static_cast<int>(rng.below(4));

    // IN / TIN on a channel-major map; std target includes the eps shrinkage.
    const Mat x = shifted_normal(c, t, rng);
    const Mat in = instance_normalize(x);
    const Mat tin = time_normalize(x);
    for (Eigen::Index i = 0; i < c; ++i) {
      norm_mean = std::max(norm_mean, std::abs(in.row(i).mean()));
      const double sd = std::sqrt((in.row(i).array() - in.row(i).mean()).square().mean());
      norm_std = std::max(norm_std, std::abs(sd - 1.0));
    }
    for (Eigen::Index j = 0; j < t; ++j) {
      norm_mean = std::max(norm_mean, std::abs(tin.col(j).mean()));
      const double sd = std::sqrt((tin.col(j).array() - tin.col(j).mean()).square().mean());
      norm_std = std::max(norm_std, std::abs(sd - 1.0));
    }
    oracle = std::max(oracle, max_abs_diff(in, oracle::standardize_rows(x, kNormEps)));
    oracle = std::max(oracle, max_abs_diff(tin, oracle::standardize_cols(x, kNormEps)));

    // Attention and speaker attention.
    const Mat q = rng.normal_matrix(t, c), k = rng.normal_matrix(ts, c), v = rng.normal_matrix(ts, c);
    const AttentionResult att = scaled_dot_attention(q, k, v);
    const oracle::Attention oatt = oracle::attention(q, k, v);
    simplex = std::max(simplex, simplex_error_rows(att.weights));
    oracle = std::max(oracle, max_abs_diff(att.output, oatt.output));
    const AttentionParams sa = random_attention(c, rng);
    const Mat xs = shifted_normal(ts, c, rng);
    const Mat sa_ref =
        xs + oracle::attention(oracle::standardize_rows(xs, kNormEps) * sa.w_q, xs * sa.w_k,
                               xs * sa.w_v)
                 .output;
    oracle = std::max(oracle, max_abs_diff(speaker_attention(xs, sa, true), sa_ref));

    // DuAN under both views: variance identity against the weighted-deviation oracle.
    const Mat x_c = shifted_normal(t, c, rng);
    const Mat f_l = shifted_normal(ts, c, rng);
    for (NormMode mode : {NormMode::IN, NormMode::TIN}) {
      const AttentionParams p = random_attention(c, rng);
      const DuanResult d = duan(x_c, f_l, p, mode);
      const oracle::Duan od = oracle::duan(x_c, f_l, p, mode);
      simplex = std::max(simplex, simplex_error_rows(d.stats.alpha));
      var_identity = std::max(var_identity, max_abs_diff(d.stats.var, od.var));
      oracle = std::max(oracle, max_abs_diff(d.stats.mean, od.mean));
      oracle = std::max(oracle, max_abs_diff(d.converted, od.converted));
    }

    // GLAN: pooled statistics are convex combinations of the per-layer ones.
    std::vector<Mat> pyramid;
    for (int l = 0; l < layers; ++l)
      pyramid.push_back(shifted_normal(6 + static_cast<Eigen::Index>(rng.below(20)), c, rng));
    const PoolingParams pp = random_pooling(c, rng);
    const GlanResult g = glan(x_c, SpeakerFeaturePyramid{pyramid}, pp);
    const oracle::Glan og = oracle::glan(x_c, pyramid, pp);
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      auto excess = [](double v, double lo, double hi) {
        return std::max({0.0, lo - v, v - hi});
      };
      glan_bound = std::max(glan_bound, excess(g.stats.pooled_mu(ch), g.stats.mu.col(ch).minCoeff(),
                                               g.stats.mu.col(ch).maxCoeff()));
      glan_bound =
          std::max(glan_bound, excess(g.stats.pooled_sigma(ch), g.stats.sigma.col(ch).minCoeff(),
                                      g.stats.sigma.col(ch).maxCoeff()));
      simplex = std::max(simplex, std::abs(og.alpha_mu.col(ch).sum() - 1.0));
      simplex = std::max(simplex, std::abs(og.alpha_sigma.col(ch).sum() - 1.0));
    }
    oracle = std::max(oracle, max_abs_diff(g.converted, og.converted));
    oracle = std::max(oracle, max_abs_diff(g.stats.pooled_mu, og.pooled_mu));

    {
      ad::Graph cg(false);
      const Mat xc = rng.normal_matrix(c, t), w3 = rng.normal_matrix(c, 3 * c, 0.3),
                b = rng.normal_matrix(c, 1);
      oracle = std::max(oracle, max_abs_diff(ad::conv1d(cg.constant(xc), cg.constant(w3),
                                                        cg.constant(b), 3).value(),
                                             oracle::conv1d(xc, w3, b, 3)));
      const Mat wi = rng.normal_matrix(3 * c, c, 0.3), wh = rng.normal_matrix(3 * c, c, 0.3),
                bi = rng.normal_matrix(3 * c, 1, 0.3), bh = rng.normal_matrix(3 * c, 1, 0.3);
      oracle = std::max(oracle, max_abs_diff(ad::gru(cg.constant(xc), cg.constant(wi),
                                                     cg.constant(wh), cg.constant(bi),
                                                     cg.constant(bh)).value(),
                                             oracle::gru(xc, wi, wh, bi, bh)));
    }

    const TriaanBlockParams bp = random_block(c, rng);
    oracle = std::max(oracle, max_abs_diff(triaan_block(x_c, f_l, SpeakerFeaturePyramid{pyramid}, bp),
                                           oracle::triaan_block(x_c, f_l, pyramid, bp)));
  }
  r.seconds = sw.seconds();
  r.passed = norm_mean <= kNormStatTol && norm_std <= kNormStatTol && simplex <= kSimplexTol &&
             var_identity <= kOracleTol && oracle <= kOracleTol && glan_bound <= kSimplexTol &&
             r.seconds < kKernelBudgetSeconds;
  r.detail = fmt(
      "%d seeds: IN/TIN |mean| %.1e |std-1| %.1e, simplex %.1e, DuAN var identity %.1e, "
      "oracle %.1e, GLAN bound excess %.1e",
      seeds, norm_mean, norm_std, simplex, var_identity, oracle, glan_bound);
  return r;
}

// --- 2 -------------------------------------------------------------------------------

namespace {

struct GradRow {
  std::string name;
  double rel;
};

std::string param_group(const std::string& n) {
  auto has = [&n](const char* s) { return n.find(s) != std::string::npos; };
  if (has(".input.")) return "input conv";
  if (has("postnet")) return "PostNet";
  if (has("gru")) return "GRU";
  if (has(".sa.")) return "speaker attention";
  if (has("glan")) return "GLAN";
  if (has("bottleneck.")) return "bottleneck DuAN+fuse";
  if (has(".triaan.")) return "TriAAN block DuAN+fuse";
  if (has(".conv1.") || has(".conv2.")) return "conv blocks";
  return "output projection";
}

// Full-model finite differences with every weight randomized (including the
// zero-initialized PostNet output layer).
std::vector<GradRow> model_gradient_rows(double h) {
  ModelConfig cfg;
  cfg.content_dim = 8;
  cfg.channels = 8;
  cfg.layers = 2;
  cfg.mel_bins = 8;
  cfg.postnet = {5, 8, 5};
  cfg.frontend = Frontend::Adapter;
  cfg.adapter_name = "gradcheck";
  Model model(cfg, 3);
  Rng rng(17);
  for (std::size_t i = 0; i < model.weights().size(); ++i) {
    Mat& w = model.weights().value(i);
    w = rng.normal_matrix(w.rows(), w.cols(), 0.4);
  }
  ConversionInput in;
  in.content = rng.normal_matrix(8, 12);
  in.log_f0 = rng.normal_matrix(12, 1);
  in.targets = {rng.normal_matrix(8, 10)};
  const Mat proj = rng.normal_matrix(cfg.mel_bins, 12);

  std::vector<Mat> analytic = model.weights().zeros_like();
  {
    ad::Graph g;
    WeightBinder w(g, model.weights());
    const ForwardNodes n = model.build_forward(w, in);
    g.backward(ad::sum(ad::mul(n.mel, g.constant(proj))));
    g.accumulate_leaf_grads(analytic);
  }
  auto value = [&]() { return model.forward(in).cwiseProduct(proj).sum(); };

  // Biases that feed straight into a normalization have an exactly zero
  // gradient; the denominator floor keeps FD noise there from reading as error.
  double total = 0.0;
  for (const Mat& a : analytic) total += a.squaredNorm();
  const double floor = 1e-6 * std::sqrt(total);
  std::map<std::string, double> worst;
  for (std::size_t i = 0; i < model.weights().size(); ++i) {
    Mat& w = model.weights().value(i);
    Mat numeric(w.rows(), w.cols());
    for (Eigen::Index e = 0; e < w.size(); ++e) {
      const double orig = w.data()[e];
      w.data()[e] = orig + h;
      const double up = value();
      w.data()[e] = orig - h;
      const double down = value();
      w.data()[e] = orig;
      numeric.data()[e] = (up - down) / (2.0 * h);
    }
    const double denom = std::max(analytic[i].norm() + numeric.norm(), floor);
    const double rel = (analytic[i] - numeric).norm() / denom;
    double& slot = worst[param_group(model.weights().name(i))];
    slot = std::max(slot, rel);
  }
  std::vector<GradRow> rows;
  for (const auto& [name, rel] : worst) rows.push_back({"model: " + name, rel});
  return rows;
}

}  // namespace

CheckResult gradient_verification(std::ostream* log) {
  Stopwatch sw;
  CheckResult r{"2", "gradient verification", false, "", 0.0};
  constexpr Eigen::Index C = 8, T = 12, Ts = 10;
  Rng rng(21);
  auto m = [&rng](Eigen::Index a, Eigen::Index b, double s = 1.0) {
    return rng.normal_matrix(a, b, s);
  };
  const double ws = 1.0 / std::sqrt(static_cast<double>(C));
  std::vector<GradRow> rows;
  auto run = [&rows](const std::string& name, const oracle::GraphFn& f,
                     const std::vector<Mat>& inputs) {
    rows.push_back({name, oracle::check_gradients(f, inputs).max_rel_error});
  };

  run("IN (standardize over time)",
      [](ad::Graph&, const std::vector<ad::Var>& v) { return ad::standardize_cols(v[0], kNormEps); },
      {m(T, C)});
  run("TIN (standardize over channels)",
      [](ad::Graph&, const std::vector<ad::Var>& v) { return ad::standardize_rows(v[0], kNormEps); },
      {m(T, C)});
  run("adaptive normalization",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        return diff::adaptive_normalize(v[0], v[1], v[2]);
      },
      {m(T, C), m(1, C), (m(1, C).array().abs() + 0.5).matrix()});
  run("speaker attention",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        return diff::speaker_attention(v[0], {v[1], v[2], v[3]}, true);
      },
      {m(Ts, C), m(C, C, ws), m(C, C, ws), m(C, C, ws)});
  for (NormMode mode : {NormMode::IN, NormMode::TIN})
    run(mode == NormMode::IN ? "DuAN (IN view)" : "DuAN (TIN view)",
        [mode](ad::Graph&, const std::vector<ad::Var>& v) {
          return diff::duan(v[0], v[1], {v[2], v[3], v[4]}, mode).converted;
        },
        {m(T, C), m(Ts, C), m(C, C, ws), m(C, C, ws), m(C, C, ws)});
  run("GLAN",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        return diff::glan(v[0], {v[1], v[2]}, {v[3], v[4]}).converted;
      },
      {m(T, C), m(Ts, C), m(Ts + 3, C), m(C, C, ws), m(C, C, ws)});
  run("TriAAN block",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        diff::TriaanBlockVars p{{v[4], v[5], v[6]}, {v[7], v[8], v[9]}, v[10], v[11], {v[12], v[13]}};
        return diff::triaan_block(v[0], v[1], {v[2], v[3]}, p);
      },
      {m(T, C), m(Ts, C), m(Ts, C), m(Ts + 2, C), m(C, C, ws), m(C, C, ws), m(C, C, ws),
       m(C, C, ws), m(C, C, ws), m(C, C, ws), m(C, 2 * C, ws), m(C, 1, 0.1), m(C, C, ws),
       m(C, C, ws)});
  run("conv1d (k=3)",
      [](ad::Graph&, const std::vector<ad::Var>& v) { return ad::conv1d(v[0], v[1], v[2], 3); },
      {m(C, T), m(C, 3 * C, ws), m(C, 1)});
  run("residual conv block",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        return ad::add(v[0], ad::conv1d(ad::relu(ad::conv1d(v[0], v[1], v[2], 3)), v[3], v[4], 3));
      },
      {m(C, T), m(C, 3 * C, ws), m(C, 1), m(C, 3 * C, ws), m(C, 1)});
  run("GRU",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        return ad::gru(v[0], v[1], v[2], v[3], v[4]);
      },
      {m(C + 1, T), m(3 * C, C + 1, 0.5), m(3 * C, C, 0.5), m(3 * C, 1, 0.3), m(3 * C, 1, 0.3)});
  run("PostNet-style tanh conv stack",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        ad::Var h = ad::tanh(ad::conv1d(v[0], v[1], v[2], 5));
        return ad::add(v[0], ad::conv1d(h, v[3], v[4], 5));
      },
      {m(C, T), m(C, 5 * C, 0.2), m(C, 1), m(C, 5 * C, 0.2), m(C, 1)});
  run("reconstruction loss",
      [](ad::Graph&, const std::vector<ad::Var>& v) {
        return diff::combined_loss(v[0], v[1], v[2]).total;
      },
      {m(C, T), m(C, T), m(C, T)});
  for (GradRow& row : model_gradient_rows(1e-5)) rows.push_back(row);

  double worst = 0.0;
  std::string worst_name;
  for (const GradRow& row : rows) {
    if (log) *log << fmt("  grad %-32s rel %.2e\n", row.name.c_str(), row.rel);
    if (row.rel >= worst) {
      worst = row.rel;
      worst_name = row.name;
    }
  }
  r.seconds = sw.seconds();
  r.passed = worst < kGradRelTol && r.seconds < kGradBudgetSeconds;
  r.detail = fmt("%zu blocks at C=8 T=12 L=2, worst rel error %.2e (%s)", rows.size(), worst,
                 worst_name.c_str());
  return r;
}

// --- 3 -------------------------------------------------------------------------------

CheckResult loss_arithmetic() {
  Stopwatch sw;
  CheckResult r{"3", "loss arithmetic", false, "", 0.0};
  const Mat y = Mat::Constant(1, 1, 0.0), yh = Mat::Constant(1, 1, 1.0),
            ys = Mat::Constant(1, 1, 3.0);
  const LossBundle b = combined_loss(y, yh, ys);
  const double l1 = l1_loss(Mat::Zero(2, 2), Mat::Ones(2, 2));

  ad::Graph g(false);
  const double diff_total =
      diff::combined_loss(g.constant(y), g.constant(yh), g.constant(ys)).total.value()(0, 0);
  Rng rng(4);
  const Mat a = rng.normal_matrix(5, 9), c = rng.normal_matrix(5, 9);
  const bool symmetric = l1_loss(a, c) == l1_loss(c, a);

  r.seconds = sw.seconds();
  r.passed = std::abs(b.total - 4.0) <= kLossTol && std::abs(l1 - 2.0) <= kLossTol &&
             std::abs(diff_total - 4.0) <= kLossTol && symmetric;
  r.detail = fmt("(1+3)/2+2 = %.12g, ||0-1||_1/T on 2x2 = %.12g, graph total %.12g, symmetric %s",
                 b.total, l1, diff_total, symmetric ? "yes" : "no");
  return r;
}

// --- 4 -------------------------------------------------------------------------------

CheckResult overfit(const OverfitOptions& o, std::ostream* log) {
  Stopwatch sw;
  CheckResult r{"4", "overfit experiment", false, "", 0.0};
  const auto speakers = make_synth_speakers(o.speakers, o.seed);
  Rng rng(o.seed + 1);
  std::vector<UtteranceFeatures> data;
  for (const SynthSpeaker& s : speakers)
    for (int i = 0; i < o.utterances; ++i)
      data.push_back(mel_features(synthesize_utterance(s, rng, 1.4, 2.2).samples,
                                  s.id + "_" + std::to_string(i), s.id));

  Model model(ModelConfig::desk(), o.seed);
  TrainConfig tc = TrainConfig::desk();
  tc.batch_size = o.batch_size;
  tc.crop_frames = o.crop_frames;
  tc.learning_rate = o.learning_rate;
  tc.max_steps = static_cast<std::uint64_t>(o.max_steps);
  tc.epochs = o.max_steps;
  tc.seed = o.seed;
  TrainHooks hooks;
  hooks.on_step = [log](const TrainRecord& rec) {
    if (log && rec.step % 100 == 0) *log << "  " << format_train_record(rec) << '\n' << std::flush;
  };
  const TrainResult res = train(model, data, tc, hooks);

  const std::size_t n = res.records.size();
  const std::size_t w = std::min<std::size_t>(50, n);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < w; ++i) {
    first += res.records[i].loss.total / static_cast<double>(w);
    last += res.records[n - w + i].loss.total / static_cast<double>(w);
  }

  double self_l1 = 0, random_l1 = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const UtteranceFeatures& u = data[i];
    const Mat out = model.forward({u.content.data, u.pitch.log_f0, {u.content.data}});
    self_l1 += l1_loss(u.mel.data, out) / static_cast<double>(data.size());
    std::size_t j = rng.below(data.size() - 1);
    if (j >= i) ++j;
    const Eigen::Index t = std::min(u.frames(), data[j].frames());
    random_l1 += l1_loss(u.mel.data.leftCols(t), data[j].mel.data.leftCols(t)) /
                 static_cast<double>(data.size());
  }
  r.seconds = sw.seconds();
  r.passed = n > 0 && last < 0.5 * first && self_l1 < random_l1 &&
             r.seconds < kOverfitBudgetSeconds;
  r.detail = fmt("%zu steps: MA50 %.3f -> %.3f (ratio %.3f < 0.5); self L1 %.3f vs random %.3f",
                 n, first, last, last / first, self_l1, random_l1);
  return r;
}

// --- 5 -------------------------------------------------------------------------------

CheckResult shape_contract(int combinations, std::uint64_t seed) {
  Stopwatch sw;
  CheckResult r{"5", "shape contract", false, "", 0.0};
  const Model model(ModelConfig::desk(), seed);
  Rng rng(seed + 100);
  int shape_ok = 0, multi = 0, multi_differs = 0;
  double min_diff = std::numeric_limits<double>::infinity();
  for (int i = 0; i < combinations; ++i) {
    const int k = std::array<int, 3>{1, 3, 5}[static_cast<std::size_t>(i % 3)];
    const Eigen::Index ts = 20 + static_cast<Eigen::Index>(rng.below(131));
    ConversionInput in;
    in.content = rng.normal_matrix(kMelBins, ts);
    in.log_f0 = rng.normal_matrix(ts, 1);
    for (int j = 0; j < k; ++j)
      in.targets.push_back(rng.normal_matrix(kMelBins, 20 + static_cast<Eigen::Index>(rng.below(131))));
    const Mat out = model.forward(in);
    if (out.rows() == kMelBins && out.cols() == ts && out.allFinite()) ++shape_ok;
    if (k > 1) {
      ++multi;
      ConversionInput one = in;
      one.targets.resize(1);
      const double d = l1_loss(out, model.forward(one));
      min_diff = std::min(min_diff, d);
      if (d > 0.0) ++multi_differs;
    }
  }
  r.seconds = sw.seconds();
  r.passed = shape_ok == combinations && multi_differs == multi && multi > 0;
  r.detail = fmt("%d/%d outputs are 80 x T_source; %d/%d multi-target runs differ from one-shot "
                 "(min L1 %.3g)",
                 shape_ok, combinations, multi_differs, multi, min_diff);
  return r;
}

// --- 6 -------------------------------------------------------------------------------

CheckResult metric_oracles() {
  Stopwatch sw;
  CheckResult r{"6", "metric oracles", false, "", 0.0};
  std::vector<std::string> failures;
  Rng rng(6);
  auto random_string = [&rng]() {
    std::string s(rng.below(9), 'a');
    for (char& c : s) c = static_cast<char>('a' + rng.below(4));
    return s;
  };
  int metric_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::string a = random_string(), b = random_string(), c = random_string();
    const std::size_t ab = edit_distance(a, b);
    const bool ok = ab == oracle::levenshtein(a, b) && ab == edit_distance(b, a) &&
                    edit_distance(a, a) == 0 && ((ab == 0) == (a == b)) &&
                    edit_distance(a, c) <= ab + edit_distance(b, c);
    metric_bad += ok ? 0 : 1;
  }
  if (metric_bad) failures.push_back(fmt("%d edit-distance property violations", metric_bad));

  auto exact = [&failures](const char* what, double got, double want) {
    if (std::abs(got - want) > 1e-12) failures.push_back(fmt("%s = %.12g, want %.12g", what, got, want));
  };
  exact("edit(abc,axc)", static_cast<double>(edit_distance(std::string("abc"), std::string("axc"))), 1);
  exact("edit('',abc)", static_cast<double>(edit_distance(std::string(), std::string("abc"))), 3);
  exact("WER(the cat|the bat)", wer(Transcript("the cat"), Transcript("the bat")), 0.5);
  exact("CER(the cat|the bat)", cer(Transcript("the cat"), Transcript("the bat")), 1.0 / 6.0);
  exact("WER(a|a b c)", wer(Transcript("a"), Transcript("a b c")), 2.0);
  exact("cos((1,0),(1,1))", cosine_similarity(Vec::Unit(2, 0), Vec::Ones(2)), 1.0 / std::sqrt(2.0));
  exact("SV([.2,.6,.9],.5)", sv_accept_rate({0.2, 0.6, 0.9}, 0.5), 2.0 / 3.0);

  // Seeded overlapping Gaussian scores against the exhaustive and grid oracles.
  int eer_bad = 0;
  constexpr double step = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    ScorePair sp;
    const std::size_t ng = 20 + rng.below(200), ni = 20 + rng.below(200);
    for (std::size_t i = 0; i < ng; ++i) sp.genuine.push_back(std::clamp(0.6 + 0.2 * rng.normal(), -1.0, 1.0));
    for (std::size_t i = 0; i < ni; ++i) sp.impostor.push_back(std::clamp(0.2 + 0.2 * rng.normal(), -1.0, 1.0));
    const EerResult got = eer_threshold(sp);
    const oracle::Eer ex = oracle::eer_exhaustive(sp.genuine, sp.impostor);
    const auto grid = oracle::eer_grid(sp.genuine, sp.impostor, -1.0, 1.0, step);
    double grid_gap = std::numeric_limits<double>::infinity();
    for (const auto& p : grid) grid_gap = std::min(grid_gap, std::abs(p.far - p.frr));
    const double count_step = 1.0 / static_cast<double>(std::min(ng, ni));
    // some grid threshold within one step of ours attains the grid optimum
    bool near = false;
    for (const auto& p : grid)
      near = near || (std::abs(p.threshold - got.threshold) <= step + 1e-12 &&
                      std::abs(p.far - p.frr) <= grid_gap + count_step);
    const bool ok = got.threshold == ex.threshold && got.eer == ex.eer && near &&
                    std::abs(got.far - got.frr) <= grid_gap + 1e-12 &&
                    std::abs(got.far - got.frr) <= count_step;
    eer_bad += ok ? 0 : 1;
  }
  if (eer_bad) failures.push_back(fmt("%d/20 EER oracle mismatches", eer_bad));

  const EerResult sep = eer_threshold({{0.8, 0.9, 0.95}, {0.1, 0.2, 0.3}});
  exact("EER(separated)", sep.eer, 0.0);
  if (!(sep.threshold > 0.3 && sep.threshold <= 0.8)) failures.push_back("separated threshold outside the gap");
  const std::vector<double> same = {0.1, 0.4, 0.5, 0.7, 0.9};
  exact("EER(identical)", eer_threshold({same, same}).eer, 0.5);

  r.seconds = sw.seconds();
  r.passed = failures.empty();
  if (r.passed) {
    r.detail = "1000 edit-distance pairs, hand cases exact, 20 EER sweeps match oracle, "
               "separated EER 0, identical EER 0.5";
  } else {
    for (std::size_t i = 0; i < failures.size(); ++i) r.detail += (i ? "; " : "") + failures[i];
  }
  return r;
}

// --- 7 -------------------------------------------------------------------------------

namespace {

struct EndToEnd {
  std::string manifest, pairs, losses, mel, wav;
};

EndToEnd end_to_end(const fs::path& corpus, const fs::path& dir, int steps) {
  fs::remove_all(dir);
  AppConfig cfg = AppConfig::for_profile("desk");
  cfg.set_seed(42);
  cfg.train.batch_size = 4;
  cfg.train.max_steps = static_cast<std::uint64_t>(steps);
  cfg.train.epochs = steps;
  cfg.train.learning_rate = 1e-3;
  cfg.convert.griffin_lim_iterations = 8;

  const DatasetManifest manifest = prepare(corpus, dir / "prepared", cfg.model, {cfg.split, 1});
  std::ostringstream log;
  const TrainRunResult tr = run_training(dir / "prepared", cfg, dir / "model.ckpt", nullptr);
  for (const TrainRecord& rec : tr.train.records)
    log << fmt("%llu %.17g %.17g %.17g %.17g %.17g\n", static_cast<unsigned long long>(rec.step),
               rec.loss.recon, rec.loss.siam_recon, rec.loss.consistency, rec.loss.total,
               rec.grad_norm);

  const PairgenResult pg = pairgen(manifest, Scenario::S2S, 1, cfg.seed);
  std::ostringstream pairs;
  write_pairs(pairs, pg.pairs);
  ConversionJob job;
  job.source = manifest.find(pg.pairs[0].source_id).entry.audio_path;
  job.targets = {manifest.find(pg.pairs[0].target_ids[0]).entry.audio_path};
  job.checkpoint = dir / "model.ckpt";
  job.output = dir / "converted";
  job.frontend = Frontend::Mel;
  job.options = cfg.convert;
  const ConversionOutput out = convert(job);

  return {read_bytes(dir / "prepared" / "manifest.tsv"), pairs.str(), log.str(),
          read_bytes(out.mel_path), read_bytes(out.wav_path)};
}

}  // namespace

CheckResult reproducibility(const fs::path& work_dir, int steps) {
  Stopwatch sw;
  CheckResult r{"7", "reproducibility", false, "", 0.0};
  const fs::path corpus = work_dir / "repro_corpus";
  fs::remove_all(corpus);
  write_synth_corpus(corpus, {8, 6, 1.3, 1.8, 3});
  const EndToEnd a = end_to_end(corpus, work_dir / "repro_a", steps);
  const EndToEnd b = end_to_end(corpus, work_dir / "repro_b", steps);
  const bool m = a.manifest == b.manifest, p = a.pairs == b.pairs, l = a.losses == b.losses,
             mel = a.mel == b.mel, wav = a.wav == b.wav;
  r.seconds = sw.seconds();
  r.passed = m && p && l && mel && wav && !a.losses.empty() && !a.mel.empty();
  auto yn = [](bool v) { return v ? "identical" : "DIFFER"; };
  r.detail = fmt("prepare -> %d steps -> convert twice: manifest %s, pairs %s, loss trace %s, "
                 "mel %s, wav %s",
                 steps, yn(m), yn(p), yn(l), yn(mel), yn(wav));
  return r;
}

// --- 8 -------------------------------------------------------------------------------

CheckResult checkpoint_roundtrip(const fs::path& work_dir) {
  Stopwatch sw;
  CheckResult r{"8", "checkpoint round-trip", false, "", 0.0};
  Model model(ModelConfig::desk(), 9);
  Rng rng(10);
  TrainingSample s{rng.normal_matrix(kMelBins, 40), rng.normal_matrix(40, 1),
                   rng.normal_matrix(kMelBins, 40)};
  AdamState state;
  TrainConfig tc = TrainConfig::desk();
  train_step(model, state, {s}, tc, rng);

  ConversionInput in{rng.normal_matrix(kMelBins, 57), rng.normal_matrix(57, 1),
                     {rng.normal_matrix(kMelBins, 33)}};
  const Mat before = model.forward(in);
  const fs::path path = work_dir / "roundtrip.ckpt";
  save_checkpoint(path, make_checkpoint(model, state, tc));
  Checkpoint loaded = load_checkpoint(path);

  bool weights_equal = loaded.weights.size() == model.weights().size();
  bool moments_equal = loaded.optimizer.m.size() == state.m.size();
  for (std::size_t i = 0; weights_equal && i < model.weights().size(); ++i)
    weights_equal = loaded.weights.name(i) == model.weights().name(i) &&
                    bitwise_equal(loaded.weights.value(i), model.weights().value(i));
  for (std::size_t i = 0; moments_equal && i < state.m.size(); ++i)
    moments_equal = bitwise_equal(loaded.optimizer.m[i], state.m[i]) &&
                    bitwise_equal(loaded.optimizer.v[i], state.v[i]);
  const Model restored(loaded.config, std::move(loaded.weights));
  const Mat after = restored.forward(in);
  const bool forward_equal = bitwise_equal(before, after);

  bool truncated_rejected = false;
  {
    const std::string bytes = read_bytes(path);
    const fs::path bad = work_dir / "truncated.ckpt";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    try {
      load_checkpoint(bad);
    } catch (const IoError&) {
      truncated_rejected = true;
    }
  }
  r.seconds = sw.seconds();
  r.passed = weights_equal && moments_equal && forward_equal && loaded.config == model.config() &&
             loaded.step == state.step && truncated_rejected;
  r.detail = fmt("weights %s, Adam moments %s, forward %s, step %llu, truncated file %s",
                 weights_equal ? "bitwise equal" : "DIFFER",
                 moments_equal ? "bitwise equal" : "DIFFER",
                 forward_equal ? "bitwise equal" : "DIFFERS",
                 static_cast<unsigned long long>(loaded.step),
                 truncated_rejected ? "rejected" : "ACCEPTED");
  return r;
}

// --- module checks -------------------------------------------------------------------

CheckResult feature_invariants() {
  Stopwatch sw;
  CheckResult r{"features", "mel and pitch invariants", false, "", 0.0};
  RawAudio tone;
  const double f0 = 150.0;
  for (int i = 0; i < kSampleRate; ++i) {
    double s = 0.0;
    for (int h = 1; h <= 5; ++h)
      s += std::sin(2.0 * std::numbers::pi * f0 * h * i / kSampleRate) / h;
    tone.samples.push_back(0.3 * s);
  }
  const MelSpectrogram mel = extract_mel(tone);
  const PitchTrack pitch = extract_f0(tone);
  std::vector<double> voiced;
  for (Eigen::Index t = 0; t < pitch.frames(); ++t)
    if (pitch.voiced[static_cast<std::size_t>(t)]) voiced.push_back(pitch.f0_hz(t));
  std::sort(voiced.begin(), voiced.end());
  const double median = voiced.empty() ? 0.0 : voiced[voiced.size() / 2];
  double z_mean = 0.0;
  for (Eigen::Index t = 0; t < pitch.frames(); ++t)
    if (pitch.voiced[static_cast<std::size_t>(t)]) z_mean += pitch.log_f0(t);
  z_mean = voiced.empty() ? 1.0 : z_mean / static_cast<double>(voiced.size());

  RawAudio silence;
  silence.samples.assign(8000, 0.0);
  const PitchTrack quiet = extract_f0(silence);

  r.seconds = sw.seconds();
  const bool shape = mel.data.rows() == kMelBins && mel.data.cols() == frame_count(tone.size()) &&
                     mel.data.allFinite();
  r.passed = shape && std::abs(median - f0) / f0 < 0.05 && std::abs(z_mean) < 1e-9 &&
             quiet.all_unvoiced && pitch.frames() == mel.frames();
  r.detail = fmt("mel %lld x %lld for 16000 samples, median f0 %.1f Hz for a %.0f Hz tone, "
                 "voiced z-mean %.1e, silence unvoiced %s",
                 static_cast<long long>(mel.data.rows()), static_cast<long long>(mel.data.cols()),
                 median, f0, z_mean, quiet.all_unvoiced ? "yes" : "no");
  return r;
}

CheckResult masking_invariants() {
  Stopwatch sw;
  CheckResult r{"training", "time-mask invariants", false, "", 0.0};
  Rng rng(12);
  const Mat x = rng.normal_matrix(8, 200);
  const bool identity = bitwise_equal(time_mask(x, 0.0, rng), x);
  bool complement = true;
  double total = 0.0;
  constexpr int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const MaskSpan s = draw_mask_span(x.cols(), 0.1, rng);
    total += static_cast<double>(s.length) / static_cast<double>(x.cols());
    if (i < 200) {
      const Mat y = apply_mask(x, s);
      for (Eigen::Index t = 0; t < x.cols(); ++t) {
        const bool in = t >= s.start && t < s.start + s.length;
        complement = complement && (in ? y.col(t).isZero(0.0) : bitwise_equal(y.col(t), x.col(t)));
      }
    }
  }
  const double mean = total / draws;
  const double expected = std::floor(0.1 * 200) / 2.0 / 200.0;
  r.seconds = sw.seconds();
  r.passed = identity && complement && std::abs(mean - expected) <= 0.1 * expected;
  r.detail = fmt("max_fraction 0 identity %s, span zero / complement untouched %s, mean masked "
                 "fraction %.4f vs %.4f",
                 identity ? "yes" : "no", complement ? "yes" : "no", mean, expected);
  return r;
}

CheckResult split_invariants() {
  Stopwatch sw;
  CheckResult r{"cli_pipeline", "split and pair invariants", false, "", 0.0};
  std::vector<CorpusEntry> corpus;
  for (int s = 0; s < 10; ++s)
    for (int u = 0; u < 10; ++u)
      corpus.push_back({fmt("s%d_u%d", s, u), fmt("s%d", s), fmt("/c/s%d/u%d.wav", s, u), {}, 1.0});
  SplitConfig sc;
  sc.seed = 5;
  const DatasetManifest m = make_manifest(corpus, sc);
  const DatasetManifest again = make_manifest(corpus, sc);
  std::ostringstream a, b;
  m.write_tsv(a);
  again.write_tsv(b);
  const std::size_t n_train = m.select(Split::Train).size(), n_valid = m.select(Split::Valid).size(),
                    n_test = m.select(Split::Test).size();
  bool disjoint = true;
  for (const auto& un : m.speakers(true))
    for (const ManifestRecord* rec : m.select(Split::Train)) disjoint = disjoint && rec->entry.speaker_id != un;
  const PairgenResult p1 = pairgen(m, Scenario::S2S, 20, 7), p2 = pairgen(m, Scenario::S2S, 20, 7);
  const PairgenResult pu = pairgen(m, Scenario::U2U, 20, 7);
  bool distinct = p1.pairs.size() == 20 && pu.pairs.size() == 20;
  for (const auto* res : {&p1, &pu})
    for (const ConversionPair& p : res->pairs)
      distinct = distinct && m.find(p.source_id).entry.speaker_id != m.find(p.target_ids[0]).entry.speaker_id;
  std::ostringstream q1, q2;
  write_pairs(q1, p1.pairs);
  write_pairs(q2, p2.pairs);
  auto near = [](std::size_t got, double want) { return std::abs(static_cast<double>(got) - want) <= 1.0; };
  r.seconds = sw.seconds();
  r.passed = a.str() == b.str() && near(n_train, 60) && near(n_valid, 20) && near(n_test, 20) &&
             disjoint && distinct && q1.str() == q2.str();
  r.detail = fmt("100 utterances -> %zu/%zu/%zu, %zu unseen speakers disjoint from train %s, "
                 "pairs cross-speaker %s, deterministic %s",
                 n_train, n_valid, n_test, m.speakers(true).size(), disjoint ? "yes" : "no",
                 distinct ? "yes" : "no", (a.str() == b.str() && q1.str() == q2.str()) ? "yes" : "no");
  return r;
}

// --- suite ---------------------------------------------------------------------------

std::vector<CheckResult> run_checks(const SuiteOptions& options) {
  fs::path work = options.work_dir;
  if (work.empty()) work = fs::temp_directory_path() / "triaan_check";
  fs::create_directories(work);
  std::vector<CheckResult> out;
  auto add = [&](CheckResult r) {
    if (options.log) *options.log << format_line(r) << '\n' << std::flush;
    out.push_back(std::move(r));
  };
  auto guarded = [&](const char* id, const char* name, auto fn) {
    try {
      add(fn());
    } catch (const std::exception& e) {
      add({id, name, false, std::string("exception: ") + e.what(), 0.0});
    }
  };
  guarded("1", "kernel invariants", [] { return kernel_invariants(); });
  guarded("2", "gradient verification", [&] { return gradient_verification(options.log); });
  guarded("3", "loss arithmetic", [] { return loss_arithmetic(); });
  if (options.full) guarded("4", "overfit experiment", [&] { return overfit({}, options.log); });
  guarded("5", "shape contract", [] { return shape_contract(); });
  guarded("6", "metric oracles", [] { return metric_oracles(); });
  if (options.full) guarded("7", "reproducibility", [&] { return reproducibility(work); });
  guarded("8", "checkpoint round-trip", [&] { return checkpoint_roundtrip(work); });
  guarded("features", "mel and pitch invariants", [] { return feature_invariants(); });
  guarded("training", "time-mask invariants", [] { return masking_invariants(); });
  guarded("cli_pipeline", "split and pair invariants", [] { return split_invariants(); });
  return out;
}

std::string format_line(const CheckResult& r) {
  return fmt("%s %s %s (%.1fs): ", r.passed ? "PASS" : "FAIL", r.id.c_str(), r.name.c_str(),
             r.seconds) +
         r.detail;
}

std::string format_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  os << fmt("%-13s %-28s %-6s %8s\n", "id", "check", "status", "seconds");
  std::size_t failed = 0;
  for (const CheckResult& r : results) {
    os << fmt("%-13s %-28s %-6s %8.1f\n", r.id.c_str(), r.name.c_str(), r.passed ? "pass" : "FAIL",
              r.seconds);
    failed += r.passed ? 0 : 1;
  }
  os << fmt("%zu checks, %zu failed\n", results.size(), failed);
  return os.str();
}

}  // namespace triaan::check
