#pragma once

// Attention-based adaptive normalization: DuAN (per-point speaker statistics
// under an IN or TIN view), GLAN (statistics pooled across every speaker
// encoder layer) and the block combining both. Time-major maps (T x C).

#include "triaan/attention.hpp"
#include "triaan/normkernels.hpp"

#include <vector>

namespace triaan {

/// Inside the reduced-std square root.
inline constexpr double kStatEps = 1e-8;

enum class NormMode { IN, TIN };

struct SpeakerFeaturePyramid {
  std::vector<Mat> maps;  // L maps, each T_s x C

  std::size_t layers() const { return maps.size(); }
  Eigen::Index channels() const { return maps.empty() ? 0 : maps.front().cols(); }
  void validate() const;
};

struct DuanStatistics {
  Mat alpha;  // T_c x T_s
  Mat mean;   // T_c x C, alpha V
  Mat var;    // T_c x C, clamped to >= 0
  ChannelStats reduced;
  double min_var_before_clamp = 0.0;
  Eigen::Index clamped_entries = 0;
};

struct DuanResult {
  Mat converted;  // T_c x C
  DuanStatistics stats;
};

struct GlanStatistics {
  Mat mu;     // L x C
  Mat sigma;  // L x C
  Vec pooled_mu;
  Vec pooled_sigma;
};

struct GlanResult {
  Mat converted;  // T_c x C
  GlanStatistics stats;
};

struct TriaanBlockParams {
  AttentionParams duan_in;
  AttentionParams duan_tin;
  Mat fuse_w;  // C x 2C, pointwise conv over the [IN | TIN] channel concat
  Mat fuse_b;  // C x 1
  PoolingParams glan;

  void validate() const;
};

DuanResult duan(const Mat& x_c, const Mat& f_l, const AttentionParams& params, NormMode mode);

GlanResult glan(const Mat& x_c, const SpeakerFeaturePyramid& pyramid, const PoolingParams& params);

/// DuAN under IN and TIN with F_l, pointwise fuse 2C -> C, then GLAN.
Mat triaan_block(const Mat& x_c, const Mat& f_l, const SpeakerFeaturePyramid& pyramid,
                 const TriaanBlockParams& params);

namespace diff {

struct DuanNodes {
  ad::Var converted, alpha, mean, var_raw, var, reduced_mean, reduced_std;
};

struct GlanNodes {
  ad::Var converted, mu, sigma, pooled_mu, pooled_sigma;
};

struct PoolingVars {
  ad::Var w_mu, w_sigma;
};

struct TriaanBlockVars {
  AttentionVars duan_in, duan_tin;
  ad::Var fuse_w, fuse_b;
  PoolingVars glan;
};

/// IN(x_c) * std + mean with row vectors std/mean (1 x C), time-major x_c.
ad::Var adaptive_normalize(ad::Var x_c, ad::Var mean, ad::Var std);

DuanNodes duan(ad::Var x_c, ad::Var f_l, const AttentionVars& p, NormMode mode);
GlanNodes glan(ad::Var x_c, const std::vector<ad::Var>& pyramid, const PoolingVars& p);
/// Both DuAN views and the pointwise fuse, without GLAN.
ad::Var dual_convert(ad::Var x_c, ad::Var f_l, const AttentionVars& in_view,
                     const AttentionVars& tin_view, ad::Var fuse_w, ad::Var fuse_b);
ad::Var triaan_block(ad::Var x_c, ad::Var f_l, const std::vector<ad::Var>& pyramid,
                     const TriaanBlockVars& p);

}  // namespace diff
}  // namespace triaan
