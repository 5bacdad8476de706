#pragma once

#include "triaan/common.hpp"

namespace triaan {

/// Epsilon added to the population variance in IN and TIN.
inline constexpr double kNormEps = 1e-5;

/// Per-channel location and scale used by adaptive normalization.
struct ChannelStats {
  Vec mean;
  Vec std;  // >= 0

  Eigen::Index size() const { return mean.size(); }
  void validate() const;
};

/// Population statistics of each row of a channel-major (C x T) map.
ChannelStats channel_stats(const Mat& x);

// Axis-generic standardization. Rows: every row gets mean 0 and std 1 over
// its columns. Cols: every column over its rows. Population variance + eps.
Mat standardize_rows(const Mat& x, double eps = kNormEps);
Mat standardize_cols(const Mat& x, double eps = kNormEps);

// Vector-Jacobian products of the above given the forward input x, its
// output y and the upstream gradient dy.
Mat standardize_rows_backward(const Mat& x, const Mat& y, const Mat& dy, double eps = kNormEps);
Mat standardize_cols_backward(const Mat& x, const Mat& y, const Mat& dy, double eps = kNormEps);

/// Instance normalization of a C x T map: each channel over time. No affine.
inline Mat instance_normalize(const Mat& x) { return standardize_rows(x); }

/// Time-wise instance normalization of a C x T map: each frame over channels.
inline Mat time_normalize(const Mat& x) { return standardize_cols(x); }

/// IN(x) * std + mean, broadcast per channel over time. x is C x T.
Mat adaptive_normalize(const Mat& x, const ChannelStats& stats);

}  // namespace triaan
