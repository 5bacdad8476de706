#include "triaan/triaan_block.hpp"

#include <algorithm>

namespace triaan {

void SpeakerFeaturePyramid::validate() const {
  require(!maps.empty(), "SpeakerFeaturePyramid: no layers");
  const auto c = maps.front().cols();
  for (std::size_t l = 0; l < maps.size(); ++l) {
    require(maps[l].cols() == c, "SpeakerFeaturePyramid: layer " + std::to_string(l) +
                                     " has " + std::to_string(maps[l].cols()) +
                                     " channels, expected " + std::to_string(c));
    require(maps[l].rows() >= 1, "SpeakerFeaturePyramid: layer " + std::to_string(l) + " empty");
  }
}

void TriaanBlockParams::validate() const {
  duan_in.validate();
  duan_tin.validate();
  glan.validate();
  const auto c = duan_in.channels();
  require(duan_tin.channels() == c && glan.w_mu.rows() == c, "TriaanBlockParams: channel mismatch");
  require(fuse_w.rows() == c && fuse_w.cols() == 2 * c, "TriaanBlockParams: fuse_w shape");
  require(fuse_b.rows() == c && fuse_b.cols() == 1, "TriaanBlockParams: fuse_b shape");
}

namespace diff {

ad::Var adaptive_normalize(ad::Var x_c, ad::Var mean, ad::Var std) {
  return ad::add_row(ad::mul_row(ad::standardize_cols(x_c, kNormEps), std), mean);
}

DuanNodes duan(ad::Var x_c, ad::Var f_l, const AttentionVars& p, NormMode mode) {
  require(x_c.cols() == f_l.cols(), "duan: content has " + std::to_string(x_c.cols()) +
                                        " channels, speaker map has " +
                                        std::to_string(f_l.cols()));
  require(x_c.cols() == p.w_q.rows(), "duan: weights do not match channel count");
  // Time-major: IN standardizes each column over time, TIN each row over channels.
  auto norm = [mode](ad::Var v) {
    return mode == NormMode::IN ? ad::standardize_cols(v, kNormEps)
                                : ad::standardize_rows(v, kNormEps);
  };
  ad::Var q = ad::matmul(norm(x_c), p.w_q);
  ad::Var k = ad::matmul(norm(f_l), p.w_k);
  ad::Var v = ad::matmul(f_l, p.w_v);
  AttentionNodes att = scaled_dot_attention(q, k, v);

  DuanNodes n;
  n.alpha = att.weights;
  n.mean = att.output;
  n.var_raw = ad::sub(ad::matmul(att.weights, ad::square(v)), ad::square(n.mean));
  n.var = ad::clamp_min_zero(n.var_raw);
  n.reduced_mean = ad::mean_over_rows(n.mean);
  n.reduced_std = ad::sqrt_eps(ad::mean_over_rows(n.var), kStatEps);
  n.converted = adaptive_normalize(x_c, n.reduced_mean, n.reduced_std);
  return n;
}

GlanNodes glan(ad::Var x_c, const std::vector<ad::Var>& pyramid, const PoolingVars& p) {
  require(!pyramid.empty(), "glan: empty pyramid");
  std::vector<ad::Var> mus, sigmas;
  for (std::size_t l = 0; l < pyramid.size(); ++l) {
    const ad::Var& f = pyramid[l];
    require(f.cols() == x_c.cols(), "glan: pyramid layer " + std::to_string(l) + " has " +
                                        std::to_string(f.cols()) + " channels, content has " +
                                        std::to_string(x_c.cols()));
    ad::Var mu = ad::mean_over_rows(f);
    ad::Var centered = ad::add_row(f, ad::scale(mu, -1.0));
    mus.push_back(mu);
    sigmas.push_back(ad::sqrt_eps(ad::mean_over_rows(ad::square(centered)), kStatEps));
  }
  GlanNodes n;
  n.mu = ad::concat_rows(mus);
  n.sigma = ad::concat_rows(sigmas);
  n.pooled_mu = attentive_stat_pooling(n.mu, p.w_mu);
  n.pooled_sigma = attentive_stat_pooling(n.sigma, p.w_sigma);
  n.converted = adaptive_normalize(x_c, n.pooled_mu, n.pooled_sigma);
  return n;
}

ad::Var dual_convert(ad::Var x_c, ad::Var f_l, const AttentionVars& in_view,
                     const AttentionVars& tin_view, ad::Var fuse_w, ad::Var fuse_b) {
  ad::Var r_in = duan(x_c, f_l, in_view, NormMode::IN).converted;
  ad::Var r_tin = duan(x_c, f_l, tin_view, NormMode::TIN).converted;
  ad::Var stacked = ad::transpose(ad::concat_cols({r_in, r_tin}));  // 2C x T
  return ad::transpose(ad::conv1d(stacked, fuse_w, fuse_b, 1));
}

ad::Var triaan_block(ad::Var x_c, ad::Var f_l, const std::vector<ad::Var>& pyramid,
                     const TriaanBlockVars& p) {
  ad::Var fused = dual_convert(x_c, f_l, p.duan_in, p.duan_tin, p.fuse_w, p.fuse_b);
  return glan(fused, pyramid, p.glan).converted;
}

}  // namespace diff

namespace {

diff::AttentionVars constants(ad::Graph& g, const AttentionParams& p) {
  return {g.constant(p.w_q), g.constant(p.w_k), g.constant(p.w_v)};
}

std::vector<ad::Var> constants(ad::Graph& g, const SpeakerFeaturePyramid& pyr) {
  std::vector<ad::Var> out;
  for (const Mat& m : pyr.maps) out.push_back(g.constant(m));
  return out;
}

}  // namespace

DuanResult duan(const Mat& x_c, const Mat& f_l, const AttentionParams& params, NormMode mode) {
  params.validate();
  ad::Graph g(false);
  auto n = diff::duan(g.constant(x_c), g.constant(f_l), constants(g, params), mode);
  DuanResult r;
  r.converted = n.converted.value();
  r.stats.alpha = n.alpha.value();
  r.stats.mean = n.mean.value();
  r.stats.var = n.var.value();
  r.stats.reduced.mean = n.reduced_mean.value().row(0).transpose();
  r.stats.reduced.std = n.reduced_std.value().row(0).transpose();
  const Mat& raw = n.var_raw.value();
  r.stats.min_var_before_clamp = raw.minCoeff();
  r.stats.clamped_entries = (raw.array() < 0.0).count();
  return r;
}

GlanResult glan(const Mat& x_c, const SpeakerFeaturePyramid& pyramid, const PoolingParams& params) {
  pyramid.validate();
  params.validate();
  ad::Graph g(false);
  auto n = diff::glan(g.constant(x_c), constants(g, pyramid),
                      {g.constant(params.w_mu), g.constant(params.w_sigma)});
  GlanResult r;
  r.converted = n.converted.value();
  r.stats.mu = n.mu.value();
  r.stats.sigma = n.sigma.value();
  r.stats.pooled_mu = n.pooled_mu.value().row(0).transpose();
  r.stats.pooled_sigma = n.pooled_sigma.value().row(0).transpose();
  return r;
}

Mat triaan_block(const Mat& x_c, const Mat& f_l, const SpeakerFeaturePyramid& pyramid,
                 const TriaanBlockParams& params) {
  params.validate();
  pyramid.validate();
  ad::Graph g(false);
  diff::TriaanBlockVars v{constants(g, params.duan_in),
                          constants(g, params.duan_tin),
                          g.constant(params.fuse_w),
                          g.constant(params.fuse_b),
                          {g.constant(params.glan.w_mu), g.constant(params.glan.w_sigma)}};
  return diff::triaan_block(g.constant(x_c), g.constant(f_l), constants(g, pyramid), v).value();
}

}  // namespace triaan
