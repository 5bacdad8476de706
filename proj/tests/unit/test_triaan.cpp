#include "triaan/oracles.hpp"
#include "triaan/triaan_block.hpp"

#include <doctest.h>

using namespace triaan;

namespace {

AttentionParams rand_att(Rng& rng, Eigen::Index c) {
  return {rng.normal_matrix(c, c, 0.5), rng.normal_matrix(c, c, 0.5), rng.normal_matrix(c, c, 0.5)};
}

TriaanBlockParams rand_block(Rng& rng, Eigen::Index c) {
  return {rand_att(rng, c), rand_att(rng, c), rng.normal_matrix(c, 2 * c, 0.3), rng.normal_matrix(c, 1, 0.1),
          {rng.normal_matrix(c, c, 0.5), rng.normal_matrix(c, c, 0.5)}};
}

double channel_std(const Mat& x, Eigen::Index c) {
  return std::sqrt((x.col(c).array() - x.col(c).mean()).square().mean());
}

}  // namespace

TEST_CASE("DuAN variance identity against the brute-force oracle") {
  Rng rng(1);
  for (NormMode mode : {NormMode::IN, NormMode::TIN}) {
    const Mat xc = rng.normal_matrix(6, 4), fl = rng.normal_matrix(6, 4, 2.0);
    const AttentionParams p = rand_att(rng, 4);
    const DuanResult d = duan(xc, fl, p, mode);
    const oracle::Duan o = oracle::duan(xc, fl, p, mode);
    CHECK((d.stats.var - o.var).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((d.converted - o.converted).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(d.stats.min_var_before_clamp >= -1e-6);
  }
}

TEST_CASE("DuAN with one speaker frame has zero variance and constant output") {
  Rng rng(2);
  const DuanResult d = duan(rng.normal_matrix(9, 4), rng.normal_matrix(1, 4), rand_att(rng, 4), NormMode::IN);
  CHECK((d.stats.alpha.array() == 1.0).all());
  CHECK(d.stats.var.isZero(0.0));
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(channel_std(d.converted, c) < 1e-3);
}

TEST_CASE("DuAN output matches its reduced statistics") {
  Rng rng(3);
  const DuanResult d = duan(rng.normal_matrix(16, 5), rng.normal_matrix(12, 5, 3.0), rand_att(rng, 5), NormMode::TIN);
  for (Eigen::Index c = 0; c < 5; ++c) {
    CHECK(d.converted.col(c).mean() == doctest::Approx(d.stats.reduced.mean(c)).epsilon(1e-3));
    CHECK(channel_std(d.converted, c) == doctest::Approx(d.stats.reduced.std(c)).epsilon(1e-3));
  }
}

TEST_CASE("GLAN with one layer pools to that layer") {
  Rng rng(4);
  const Mat f = rng.normal_matrix(10, 4, 2.0);
  const GlanResult g = glan(rng.normal_matrix(12, 4), SpeakerFeaturePyramid{{f}},
                            {rng.normal_matrix(4, 4), rng.normal_matrix(4, 4)});
  CHECK(g.stats.pooled_mu.isApprox(Vec(g.stats.mu.row(0).transpose())));
  CHECK(g.stats.pooled_sigma.isApprox(Vec(g.stats.sigma.row(0).transpose())));
  for (Eigen::Index c = 0; c < 4; ++c) {
    CHECK(g.converted.col(c).mean() == doctest::Approx(f.col(c).mean()).epsilon(1e-3));
    CHECK(channel_std(g.converted, c) == doctest::Approx(channel_std(f, c)).epsilon(1e-3));
  }
}

TEST_CASE("GLAN over identical layers ignores W, convex otherwise") {
  Rng rng(5);
  const Mat f = rng.normal_matrix(8, 3);
  const GlanResult same = glan(rng.normal_matrix(5, 3), SpeakerFeaturePyramid{{f, f, f}},
                               {rng.normal_matrix(3, 3, 5.0), rng.normal_matrix(3, 3, 5.0)});
  CHECK(same.stats.pooled_mu.isApprox(Vec(same.stats.mu.row(0).transpose())));
  const GlanResult g = glan(rng.normal_matrix(5, 3),
                            SpeakerFeaturePyramid{{rng.normal_matrix(8, 3), rng.normal_matrix(6, 3, 3.0), rng.normal_matrix(9, 3, 0.2)}},
                            {rng.normal_matrix(3, 3), rng.normal_matrix(3, 3)});
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(g.stats.pooled_sigma(c) >= g.stats.sigma.col(c).minCoeff() - 1e-12);
    CHECK(g.stats.pooled_sigma(c) <= g.stats.sigma.col(c).maxCoeff() + 1e-12);
  }
}

TEST_CASE("TriAAN block keeps the content shape and matches the straight-line oracle") {
  Rng rng(6);
  for (auto [tc, ts, c, l] : {std::tuple{8, 16, 8, 2}, std::tuple{3, 20, 5, 1}, std::tuple{17, 4, 6, 3}}) {
    const Mat xc = rng.normal_matrix(tc, c), fl = rng.normal_matrix(ts, c);
    SpeakerFeaturePyramid pyr;
    for (int i = 0; i < l; ++i) pyr.maps.push_back(rng.normal_matrix(ts + i, c));
    const TriaanBlockParams p = rand_block(rng, c);
    const Mat out = triaan_block(xc, fl, pyr, p);
    CHECK(out.rows() == tc);
    CHECK(out.cols() == c);
    CHECK((out - oracle::triaan_block(xc, fl, pyr.maps, p)).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("degenerate fuse reduces the block to GLAN of the IN view") {
  Rng rng(7);
  const Eigen::Index c = 4;
  const Mat xc = rng.normal_matrix(10, c), fl = rng.normal_matrix(7, c);
  const SpeakerFeaturePyramid pyr{{rng.normal_matrix(7, c), rng.normal_matrix(9, c)}};
  TriaanBlockParams p = rand_block(rng, c);
  p.fuse_w = Mat::Zero(c, 2 * c);
  p.fuse_w.leftCols(c).setIdentity();
  p.fuse_b.setZero();
  const Mat r_in = duan(xc, fl, p.duan_in, NormMode::IN).converted;
  CHECK((triaan_block(xc, fl, pyr, p) - glan(r_in, pyr, p.glan).converted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("empty pyramid is rejected") {
  Rng rng(8);
  CHECK_THROWS_AS(glan(rng.normal_matrix(4, 3), SpeakerFeaturePyramid{}, {Mat::Zero(3, 3), Mat::Zero(3, 3)}),
                  ValidationError);
}

TEST_CASE("graph and matrix paths agree") {
  Rng rng(9);
  const Eigen::Index c = 4;
  const Mat xc = rng.normal_matrix(6, c), fl = rng.normal_matrix(5, c);
  const std::vector<Mat> pyr = {rng.normal_matrix(5, c), rng.normal_matrix(8, c)};
  const TriaanBlockParams p = rand_block(rng, c);
  ad::Graph g(false);
  auto k = [&g](const Mat& m) { return g.constant(m); };
  diff::TriaanBlockVars v{{k(p.duan_in.w_q), k(p.duan_in.w_k), k(p.duan_in.w_v)},
                          {k(p.duan_tin.w_q), k(p.duan_tin.w_k), k(p.duan_tin.w_v)},
                          k(p.fuse_w), k(p.fuse_b), {k(p.glan.w_mu), k(p.glan.w_sigma)}};
  const Mat got = diff::triaan_block(k(xc), k(fl), {k(pyr[0]), k(pyr[1])}, v).value();
  CHECK((got - triaan_block(xc, fl, SpeakerFeaturePyramid{pyr}, p)).cwiseAbs().maxCoeff() < 1e-12);
}
