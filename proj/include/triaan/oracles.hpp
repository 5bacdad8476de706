#pragma once

// Reference implementations written with explicit scalar loops. They share no
// code with the production kernels and exist only to cross-check them (unit
// tests, acceptance suite and `triaan check`).

#include "triaan/autodiff.hpp"
#include "triaan/triaan_block.hpp"

#include <functional>
#include <string>
#include <vector>

namespace triaan::oracle {

Mat standardize_rows(const Mat& x, double eps);
Mat standardize_cols(const Mat& x, double eps);

struct Attention {
  Mat output;
  Mat weights;
};
Attention attention(const Mat& q, const Mat& k, const Mat& v);

struct Duan {
  Mat converted;
  Mat mean;  // sum_j alpha_ij V_j
  Mat var;   // sum_j alpha_ij (V_j - M_i)^2
  Vec reduced_mean;
  Vec reduced_std;
};
Duan duan(const Mat& x_c, const Mat& f_l, const AttentionParams& p, NormMode mode);

struct Glan {
  Mat converted;
  Mat alpha_mu;     // L x C softmax weights
  Mat alpha_sigma;  // L x C
  Vec pooled_mu;
  Vec pooled_sigma;
  Mat mu;     // L x C
  Mat sigma;  // L x C
};
Glan glan(const Mat& x_c, const std::vector<Mat>& pyramid, const PoolingParams& p);

Mat triaan_block(const Mat& x_c, const Mat& f_l, const std::vector<Mat>& pyramid,
                 const TriaanBlockParams& p);

/// Same-padded conv, w: Cout x (Cin*K) with column ci*K + k.
Mat conv1d(const Mat& x, const Mat& w, const Mat& b, int kernel);
/// PyTorch-layout GRU, zero initial state.
Mat gru(const Mat& x, const Mat& w_ih, const Mat& w_hh, const Mat& b_ih, const Mat& b_hh);

/// O(n^2) sweep over observed scores, lowest threshold on ties.
struct Eer {
  double threshold = 0.0;
  double eer = 0.0;
  double gap = 0.0;  // |FAR - FRR|
};
Eer eer_exhaustive(const std::vector<double>& genuine, const std::vector<double>& impostor);

struct GridPoint {
  double threshold, far, frr;
};
/// FAR/FRR at thresholds lo, lo+step, ..., hi.
std::vector<GridPoint> eer_grid(const std::vector<double>& genuine,
                                const std::vector<double>& impostor, double lo, double hi,
                                double step);

/// Classic full-table Levenshtein.
std::size_t levenshtein(const std::string& a, const std::string& b);

// --- finite differences --------------------------------------------------------

/// Builds the function under test from leaves bound to the given inputs.
using GraphFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;  // worst tensor-wise ||a - n|| / (||a|| + ||n||)
  std::size_t worst_input = 0;
  std::size_t entries = 0;
};

/// Compares autodiff with central differences of the scalar sum(f(x) * R) for a
/// fixed random projection R. The denominator is floored at 1e-6 of the total
/// analytic gradient norm.
GradCheck check_gradients(const GraphFn& f, const std::vector<Mat>& inputs,
                          std::uint64_t seed = 7, double h = 1e-5);

}  // namespace triaan::oracle
