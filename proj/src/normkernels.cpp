#include "triaan/normkernels.hpp"

#include <cmath>

namespace triaan {

void ChannelStats::validate() const {
  require(mean.size() == std.size(), "ChannelStats: mean/std length mismatch");
  require((std.array() >= 0.0).all(), "ChannelStats: negative std");
}

ChannelStats channel_stats(const Mat& x) {
  require(x.cols() >= 1, "channel_stats: empty time axis");
  ChannelStats s;
  s.mean = x.rowwise().mean();
  const Mat centered = x.colwise() - s.mean;
  s.std = (centered.array().square().rowwise().sum() / static_cast<double>(x.cols())).sqrt();
  return s;
}

Mat standardize_rows(const Mat& x, double eps) {
  require(x.cols() >= 1, "standardize_rows: empty input");
  const Vec mu = x.rowwise().mean();
  Mat y = x.colwise() - mu;
  const Vec var = y.array().square().rowwise().sum() / static_cast<double>(x.cols());
  const Vec inv = (var.array() + eps).rsqrt();
  return inv.asDiagonal() * y;
}

Mat standardize_cols(const Mat& x, double eps) {
  return standardize_rows(x.transpose(), eps).transpose();
}

Mat standardize_rows_backward(const Mat& x, const Mat& y, const Mat& dy, double eps) {
  const double n = static_cast<double>(x.cols());
  const Vec mu = x.rowwise().mean();
  const Vec var = (x.colwise() - mu).array().square().rowwise().sum() / n;
  const Vec inv = (var.array() + eps).rsqrt();
  const Vec mean_dy = dy.rowwise().mean();
  const Vec mean_dy_y = dy.cwiseProduct(y).rowwise().mean();
  Mat dx = dy.colwise() - mean_dy;
  dx -= mean_dy_y.asDiagonal() * y;
  return inv.asDiagonal() * dx;
}

Mat standardize_cols_backward(const Mat& x, const Mat& y, const Mat& dy, double eps) {
  return standardize_rows_backward(x.transpose(), y.transpose(), dy.transpose(), eps)
      .transpose();
}

Mat adaptive_normalize(const Mat& x, const ChannelStats& stats) {
  stats.validate();
  require(stats.size() == x.rows(), "adaptive_normalize: stats length " +
                                        std::to_string(stats.size()) + " vs channels " +
                                        std::to_string(x.rows()));
  Mat y = stats.std.asDiagonal() * instance_normalize(x);
  y.colwise() += stats.mean;
  return y;
}

}  // namespace triaan
