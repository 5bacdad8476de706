#include "triaan/normkernels.hpp"
#include "triaan/oracles.hpp"

#include <doctest.h>

using namespace triaan;

TEST_CASE("instance normalization: each channel over time") {
  Rng rng(1);
  const Mat x = (rng.normal_matrix(6, 40, 3.0).array() + 2.0).matrix();
  const Mat y = instance_normalize(x);
  for (Eigen::Index c = 0; c < y.rows(); ++c) {
    CHECK(std::abs(y.row(c).mean()) < 1e-12);
    CHECK(std::sqrt(y.row(c).array().square().mean()) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("time-wise instance normalization: each frame over channels") {
  Rng rng(2);
  const Mat x = rng.normal_matrix(16, 9, 5.0);
  const Mat y = time_normalize(x);
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    CHECK(std::abs(y.col(t).mean()) < 1e-12);
    CHECK(std::sqrt(y.col(t).array().square().mean()) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("constant input maps to zero, not NaN") {
  const Mat y = instance_normalize(Mat::Constant(3, 5, 7.0));
  CHECK(y.allFinite());
  CHECK(y.isZero(0.0));
}

TEST_CASE("standardization matches the scalar oracle") {
  Rng rng(3);
  const Mat x = rng.normal_matrix(7, 11, 2.0);
  CHECK((standardize_rows(x) - oracle::standardize_rows(x, kNormEps)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((standardize_cols(x) - oracle::standardize_cols(x, kNormEps)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("backward matches central differences") {
  Rng rng(4);
  const Mat x = rng.normal_matrix(5, 8, 2.0);
  const Mat dy = rng.normal_matrix(5, 8);
  const Mat grad_rows = standardize_rows_backward(x, standardize_rows(x), dy);
  const Mat grad_cols = standardize_cols_backward(x, standardize_cols(x), dy);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Mat up = x, down = x;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double nr = ((standardize_rows(up) - standardize_rows(down)).cwiseProduct(dy)).sum() / (2 * h);
    const double nc = ((standardize_cols(up) - standardize_cols(down)).cwiseProduct(dy)).sum() / (2 * h);
    CHECK(grad_rows.data()[i] == doctest::Approx(nr).epsilon(1e-6));
    CHECK(grad_cols.data()[i] == doctest::Approx(nc).epsilon(1e-6));
  }
}

TEST_CASE("channel stats and adaptive normalization") {
  Rng rng(5);
  const Mat x = rng.normal_matrix(4, 30);
  ChannelStats s;
  s.mean = Vec::LinSpaced(4, -1.0, 2.0);
  s.std = Vec::LinSpaced(4, 0.5, 3.0);
  const Mat y = adaptive_normalize(x, s);
  const ChannelStats got = channel_stats(y);
  for (Eigen::Index c = 0; c < 4; ++c) {
    CHECK(got.mean(c) == doctest::Approx(s.mean(c)).epsilon(1e-9));
    CHECK(got.std(c) == doctest::Approx(s.std(c)).epsilon(1e-3));
  }
  s.std(1) = -1.0;
  CHECK_THROWS_AS(adaptive_normalize(x, s), ValidationError);
}

TEST_CASE("IN hand example") {
  Mat x(2, 2);
  x << 1, 3, 2, 6;
  Mat want(2, 2);
  want << -1, 1, -1, 1;
  CHECK((instance_normalize(x) - want).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("TIN hand example and axis duality") {
  Mat x(2, 2);
  x << 1, 2, 3, 6;
  Mat want(2, 2);
  want << -1, -1, 1, 1;
  CHECK((time_normalize(x) - want).cwiseAbs().maxCoeff() < 1e-3);
  Rng rng(9);
  const Mat r = rng.normal_matrix(5, 7);
  CHECK(time_normalize(r).isApprox(Mat(instance_normalize(Mat(r.transpose())).transpose())));
}

TEST_CASE("adaptive normalization hand example and identity stats") {
  Mat x(2, 2);
  x << 1, 3, 2, 6;
  ChannelStats s;
  s.mean = Vec(2);
  s.mean << 1, -1;
  s.std = Vec(2);
  s.std << 2, 3;
  Mat want(2, 2);
  want << -1, 3, -4, 2;
  CHECK((adaptive_normalize(x, s) - want).cwiseAbs().maxCoeff() < 1e-2);
  s.mean.setZero();
  s.std.setOnes();
  CHECK(adaptive_normalize(x, s).isApprox(instance_normalize(x)));
}

TEST_CASE("IN is invariant to per-channel positive affine maps") {
  Rng rng(10);
  const Mat x = rng.normal_matrix(4, 20);
  Mat y = x;
  for (Eigen::Index c = 0; c < 4; ++c) y.row(c) = y.row(c) * (0.5 + c) + Eigen::RowVectorXd::Constant(20, 3.0 - c);
  CHECK((instance_normalize(x) - instance_normalize(y)).cwiseAbs().maxCoeff() < 1e-4);
}
