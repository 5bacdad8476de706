#include "triaan/attention.hpp"
#include "triaan/oracles.hpp"

#include <doctest.h>

using namespace triaan;

TEST_CASE("attention weights lie on the simplex") {
  Rng rng(1);
  const AttentionResult a =
      scaled_dot_attention(rng.normal_matrix(7, 4, 4.0), rng.normal_matrix(9, 4, 4.0), rng.normal_matrix(9, 4));
  CHECK(a.weights.rows() == 7);
  CHECK(a.weights.cols() == 9);
  CHECK(a.weights.minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(a.weights.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("large logits stay finite") {
  const Mat q = Mat::Constant(2, 3, 1e3), k = Mat::Constant(4, 3, 1e3), v = Mat::Ones(4, 3);
  const AttentionResult a = scaled_dot_attention(q, k, v);
  CHECK(a.output.allFinite());
  CHECK(a.output.isApprox(Mat::Ones(2, 3)));
}

TEST_CASE("attention matches the scalar oracle") {
  Rng rng(2);
  const Mat q = rng.normal_matrix(5, 6), k = rng.normal_matrix(8, 6), v = rng.normal_matrix(8, 6);
  const AttentionResult a = scaled_dot_attention(q, k, v);
  const oracle::Attention o = oracle::attention(q, k, v);
  CHECK((a.output - o.output).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((a.weights - o.weights).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("speaker attention keeps shape, residual toggles the skip path") {
  Rng rng(3);
  const Mat x = rng.normal_matrix(10, 4);
  AttentionParams p{rng.normal_matrix(4, 4), rng.normal_matrix(4, 4), Mat::Zero(4, 4)};
  CHECK(speaker_attention(x, p, true).isApprox(x));
  CHECK(speaker_attention(x, p, false).isZero(0.0));
  p.w_v = rng.normal_matrix(4, 4);
  CHECK(speaker_attention(x, p, true).rows() == 10);
}

TEST_CASE("attentive pooling is a per-channel convex combination") {
  Rng rng(4);
  const Mat stats = rng.normal_matrix(3, 5);
  const Vec pooled = attentive_stat_pooling(stats, rng.normal_matrix(5, 5));
  for (Eigen::Index c = 0; c < 5; ++c) {
    CHECK(pooled(c) >= stats.col(c).minCoeff() - 1e-12);
    CHECK(pooled(c) <= stats.col(c).maxCoeff() + 1e-12);
  }
  // a single layer pools to itself
  const Mat one = rng.normal_matrix(1, 5);
  CHECK(attentive_stat_pooling(one, rng.normal_matrix(5, 5)).isApprox(Vec(one.row(0).transpose())));
}

TEST_CASE("mismatched shapes are rejected") {
  CHECK_THROWS_AS(scaled_dot_attention(Mat::Ones(2, 3), Mat::Ones(4, 2), Mat::Ones(4, 3)), ValidationError);
  CHECK_THROWS(speaker_attention(Mat::Ones(5, 3), {Mat::Ones(4, 4), Mat::Ones(4, 4), Mat::Ones(4, 4)}));
}

TEST_CASE("graph attention agrees with the matrix version and has gradients") {
  Rng rng(5);
  const Mat q = rng.normal_matrix(4, 3), k = rng.normal_matrix(6, 3), v = rng.normal_matrix(6, 3);
  const oracle::GradCheck gc = oracle::check_gradients(
      [](ad::Graph&, const std::vector<ad::Var>& x) { return diff::scaled_dot_attention(x[0], x[1], x[2]).output; },
      {q, k, v});
  CHECK(gc.max_rel_error < 1e-6);
  ad::Graph g(false);
  const Mat out = diff::scaled_dot_attention(g.constant(q), g.constant(k), g.constant(v)).output.value();
  CHECK((out - scaled_dot_attention(q, k, v).output).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attention hand example") {
  Mat q(1, 2), k(2, 2), v(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 1, 2, 3, 4;
  const AttentionResult a = scaled_dot_attention(q, k, v);
  CHECK(a.weights(0, 0) == doctest::Approx(0.6698).epsilon(1e-3));
  CHECK(a.weights(0, 1) == doctest::Approx(0.3302).epsilon(1e-3));
  CHECK(a.output(0, 0) == doctest::Approx(1.6604).epsilon(1e-3));
  CHECK(a.output(0, 1) == doctest::Approx(2.6604).epsilon(1e-3));
}

TEST_CASE("singleton key and zero query") {
  Rng rng(6);
  const Mat v1 = rng.normal_matrix(1, 3);
  const AttentionResult one = scaled_dot_attention(rng.normal_matrix(4, 3), rng.normal_matrix(1, 3), v1);
  CHECK((one.weights.array() == 1.0).all());
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(one.output.row(i) == v1.row(0));
  const Mat v = rng.normal_matrix(5, 3);
  const AttentionResult zero = scaled_dot_attention(Mat::Zero(2, 3), rng.normal_matrix(5, 3), v);
  CHECK(zero.weights.isApproxToConstant(0.2));
  CHECK(zero.output.row(0).isApprox(v.colwise().mean()));
}

TEST_CASE("speaker attention with W_q = W_k = 0 and W_v = I averages over time") {
  Rng rng(7);
  const Mat x = rng.normal_matrix(6, 3);
  const AttentionParams p{Mat::Zero(3, 3), Mat::Zero(3, 3), Mat::Identity(3, 3)};
  const Mat att = speaker_attention(x, p, false);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(att.row(i).isApprox(x.colwise().mean()));
}

TEST_CASE("pooling with W = 0 is the layer mean") {
  Rng rng(8);
  const Mat stats = rng.normal_matrix(4, 3);
  CHECK(attentive_stat_pooling(stats, Mat::Zero(3, 3)).isApprox(Vec(stats.colwise().mean().transpose())));
}
