#include "triaan/attention.hpp"

#include "triaan/normkernels.hpp"

#include <cmath>

namespace triaan {

namespace {

void check_square(const Mat& w, Eigen::Index c, const char* name) {
  require(w.rows() == c && w.cols() == c,
          std::string(name) + " must be " + std::to_string(c) + " x " + std::to_string(c) +
              ", got " + shape_str(w));
  require(w.allFinite(), std::string(name) + " has non-finite entries");
}

}  // namespace

void AttentionParams::validate() const {
  const auto c = w_q.rows();
  require(c >= 1, "AttentionParams: empty");
  check_square(w_q, c, "w_q");
  check_square(w_k, c, "w_k");
  check_square(w_v, c, "w_v");
}

void PoolingParams::validate() const {
  const auto c = w_mu.rows();
  require(c >= 1, "PoolingParams: empty");
  check_square(w_mu, c, "w_mu");
  check_square(w_sigma, c, "w_sigma");
}

namespace diff {

AttentionNodes scaled_dot_attention(ad::Var q, ad::Var k, ad::Var v) {
  require(q.rows() >= 1 && k.rows() >= 1, "scaled_dot_attention: empty sequence");
  require(q.cols() == k.cols(), "scaled_dot_attention: Q/K channel mismatch " +
                                    shape_str(q.value()) + " vs " + shape_str(k.value()));
  require(k.rows() == v.rows(), "scaled_dot_attention: K/V length mismatch " +
                                    shape_str(k.value()) + " vs " + shape_str(v.value()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d);
  ad::Var weights = ad::softmax_rows(logits);
  return {ad::matmul(weights, v), weights};
}

ad::Var speaker_attention(ad::Var x_s, const AttentionVars& p, bool residual) {
  require(x_s.cols() == p.w_q.rows(), "speaker_attention: input " + shape_str(x_s.value()) +
                                          " vs weights " + shape_str(p.w_q.value()));
  ad::Var q = ad::matmul(ad::standardize_rows(x_s, kNormEps), p.w_q);
  ad::Var k = ad::matmul(x_s, p.w_k);
  ad::Var v = ad::matmul(x_s, p.w_v);
  ad::Var att = scaled_dot_attention(q, k, v).output;
  return residual ? ad::add(x_s, att) : att;
}

ad::Var attentive_stat_pooling(ad::Var stats, ad::Var w) {
  require(stats.rows() >= 1, "attentive_stat_pooling: no layers");
  require(w.rows() == stats.cols() && w.cols() == stats.cols(),
          "attentive_stat_pooling: weight " + shape_str(w.value()) + " for stats " +
              shape_str(stats.value()));
  ad::Var alpha = ad::softmax_cols(ad::matmul(stats, w));
  const double layers = static_cast<double>(stats.rows());
  return ad::scale(ad::mean_over_rows(ad::mul(stats, alpha)), layers);
}

}  // namespace diff

AttentionResult scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v) {
  ad::Graph g(false);
  auto n = diff::scaled_dot_attention(g.constant(q), g.constant(k), g.constant(v));
  return {n.output.value(), n.weights.value()};
}

Mat speaker_attention(const Mat& x_s, const AttentionParams& params, bool residual) {
  params.validate();
  ad::Graph g(false);
  diff::AttentionVars p{g.constant(params.w_q), g.constant(params.w_k), g.constant(params.w_v)};
  return diff::speaker_attention(g.constant(x_s), p, residual).value();
}

Vec attentive_stat_pooling(const Mat& stats, const Mat& w) {
  ad::Graph g(false);
  return diff::attentive_stat_pooling(g.constant(stats), g.constant(w)).value().row(0).transpose();
}

}  // namespace triaan
