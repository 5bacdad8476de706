#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Graph records every operation applied to its Vars. backward() walks the
// record in reverse and accumulates vector-Jacobian products. Graphs are
// single-use and single-threaded; independent graphs may run concurrently.

#include "triaan/common.hpp"

#include <functional>
#include <vector>

namespace triaan::ad {

class Graph;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Mat& grad_out)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Value that never receives gradient.
  Var constant(Mat value);
  /// Trainable leaf referring to externally owned storage. The storage must
  /// outlive the graph. Its gradient is reported under `slot`.
  Var parameter(const Mat& value, int slot);
  /// Trainable leaf owning its value (used by gradient checks on inputs).
  Var input(Mat value, int slot);

  /// Records an op. `bw` is dropped when no input needs gradient.
  Var make(Mat value, std::initializer_list<Var> inputs, Backward bw);
  Var make(Mat value, const std::vector<Var>& inputs, Backward bw);

  const Mat& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id_].needs_grad; }
  /// Gradient reached at v after backward(); empty if none.
  const Mat& grad(Var v) const { return nodes_[v.id_].grad; }

  /// Adds g into v's gradient buffer (no-op if v needs no gradient).
  void accumulate(Var v, const Mat& g);

  /// Seeds d(root)/d(root) = 1 for a 1 x 1 root and propagates.
  void backward(Var root);

  /// grads[slot] += gradient of every leaf registered with that slot.
  void accumulate_leaf_grads(std::vector<Mat>& grads) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat owned;
    const Mat* ref = nullptr;
    Mat grad;
    Backward backward;
    bool needs_grad = false;
    int slot = -1;
  };

  Var push(Node n);

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// --- elementwise and linear algebra -----------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a (R x N) + c (R x 1) broadcast across columns.
Var add_col(Var a, Var c);
/// a (N x C) + r (1 x C) broadcast across rows.
Var add_row(Var a, Var r);
/// a (R x N) * c (R x 1) per row.
Var mul_col(Var a, Var c);
/// a (N x C) * r (1 x C) per column.
Var mul_row(Var a, Var r);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
/// sqrt(a + eps), a >= -eps assumed.
Var sqrt_eps(Var a, double eps);
/// max(a, 0).
Var clamp_min_zero(Var a);

// --- reductions, reshaping ---------------------------------------------------

/// Mean over columns: R x N -> R x 1.
Var mean_over_cols(Var a);
/// Mean over rows: N x C -> 1 x C.
Var mean_over_rows(Var a);
/// Sum of all entries -> 1 x 1.
Var sum(Var a);
/// Sum of absolute values -> 1 x 1.
Var abs_sum(Var a);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

// --- normalization and softmax ----------------------------------------------

Var standardize_rows(Var a, double eps);
Var standardize_cols(Var a, double eps);
Var softmax_rows(Var a);
Var softmax_cols(Var a);

// --- sequence layers (channel-major C x T) -----------------------------------

/// Same-padded stride-1 convolution. x: Cin x T, w: Cout x (Cin*K) with
/// column index ci*K + k, b: Cout x 1. K must be odd.
Var conv1d(Var x, Var w, Var b, int kernel);

/// Unidirectional GRU with zero initial state (PyTorch gate layout r, z, n).
/// x: D x T, w_ih: 3H x D, w_hh: 3H x H, b_ih/b_hh: 3H x 1. Returns H x T.
Var gru(Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh);

}  // namespace triaan::ad
