#pragma once

// Single-head scaled dot-product attention, speaker attention (TIN query
// self-attention) and attentive statistics pooling. All maps here are
// time-major: T x C.

#include "triaan/autodiff.hpp"
#include "triaan/common.hpp"

namespace triaan {

struct AttentionParams {
  Mat w_q, w_k, w_v;  // C x C

  Eigen::Index channels() const { return w_q.rows(); }
  void validate() const;
};

struct PoolingParams {
  Mat w_mu, w_sigma;  // C x C

  void validate() const;
};

struct AttentionResult {
  Mat output;   // T_q x C
  Mat weights;  // T_q x T_k, rows on the simplex
};

/// softmax(Q K^T / sqrt(C)) V.
AttentionResult scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v);

/// Self-attention with the query taken from the time-normalized input.
/// With `residual` the input is added to the attention output.
Mat speaker_attention(const Mat& x_s, const AttentionParams& params, bool residual = true);

/// Softmax over the L rows of (stats W), per channel, then the weighted sum of
/// the rows of `stats`. stats: L x C, w: C x C. Returns a length-C vector.
Vec attentive_stat_pooling(const Mat& stats, const Mat& w);

namespace diff {

struct AttentionVars {
  ad::Var w_q, w_k, w_v;
};

struct AttentionNodes {
  ad::Var output;
  ad::Var weights;
};

AttentionNodes scaled_dot_attention(ad::Var q, ad::Var k, ad::Var v);
ad::Var speaker_attention(ad::Var x_s, const AttentionVars& p, bool residual);
/// Returns 1 x C.
ad::Var attentive_stat_pooling(ad::Var stats, ad::Var w);

}  // namespace diff
}  // namespace triaan
