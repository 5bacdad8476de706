#include "triaan/autodiff.hpp"

#include "triaan/normkernels.hpp"

#include <cmath>

namespace triaan::ad {

const Mat& Var::value() const { return graph_->value(*this); }

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Mat value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(const Mat& value, int slot) {
  Node n;
  n.ref = &value;
  n.needs_grad = grad_enabled_;
  n.slot = slot;
  return push(std::move(n));
}

Var Graph::input(Mat value, int slot) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = grad_enabled_;
  n.slot = slot;
  return push(std::move(n));
}

Var Graph::make(Mat value, std::initializer_list<Var> inputs, Backward bw) {
  return make(std::move(value), std::vector<Var>(inputs), std::move(bw));
}

Var Graph::make(Mat value, const std::vector<Var>& inputs, Backward bw) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.graph_ != this) throw ValidationError("autodiff: mixing vars of different graphs");
      if (nodes_[v.id_].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(bw);
  }
  return push(std::move(n));
}

const Mat& Graph::value(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.ref ? *n.ref : n.owned;
}

void Graph::accumulate(Var v, const Mat& g) {
  Node& n = nodes_[v.id_];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Graph::backward(Var root) {
  require(grad_enabled_, "autodiff: backward on a graph built without gradients");
  require(value(root).size() == 1, "autodiff: backward root must be 1 x 1");
  accumulate(root, Mat::Ones(1, 1));
  for (int i = root.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

void Graph::accumulate_leaf_grads(std::vector<Mat>& grads) const {
  for (const Node& n : nodes_) {
    if (n.slot < 0 || n.grad.size() == 0) continue;
    Mat& dst = grads.at(static_cast<std::size_t>(n.slot));
    if (dst.size() == 0)
      dst = n.grad;
    else
      dst += n.grad;
  }
}

namespace {

void same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                          shape_str(b));
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw ValidationError("matmul: inner dimension mismatch " + shape_str(a.value()) + " * " +
                          shape_str(b.value()));
  Graph& g = *a.graph();
  return g.make(a.value() * b.value(), {a, b}, [a, b](Graph& g, const Mat& d) {
    if (g.needs_grad(a)) g.accumulate(a, d * g.value(b).transpose());
    if (g.needs_grad(b)) g.accumulate(b, g.value(a).transpose() * d);
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().transpose(), {a},
                [a](Graph& g, const Mat& d) { g.accumulate(a, d.transpose()); });
}

Var add(Var a, Var b) {
  same_shape(a.value(), b.value(), "add");
  Graph& g = *a.graph();
  return g.make(a.value() + b.value(), {a, b}, [a, b](Graph& g, const Mat& d) {
    g.accumulate(a, d);
    g.accumulate(b, d);
  });
}

Var sub(Var a, Var b) {
  same_shape(a.value(), b.value(), "sub");
  Graph& g = *a.graph();
  return g.make(a.value() - b.value(), {a, b}, [a, b](Graph& g, const Mat& d) {
    g.accumulate(a, d);
    if (g.needs_grad(b)) g.accumulate(b, -d);
  });
}

Var mul(Var a, Var b) {
  same_shape(a.value(), b.value(), "mul");
  Graph& g = *a.graph();
  return g.make(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Graph& g, const Mat& d) {
    if (g.needs_grad(a)) g.accumulate(a, d.cwiseProduct(g.value(b)));
    if (g.needs_grad(b)) g.accumulate(b, d.cwiseProduct(g.value(a)));
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph();
  return g.make(a.value() * s, {a}, [a, s](Graph& g, const Mat& d) { g.accumulate(a, d * s); });
}

Var add_scalar(Var a, double s) {
  Graph& g = *a.graph();
  return g.make(a.value().array() + s, {a}, [a](Graph& g, const Mat& d) { g.accumulate(a, d); });
}

Var add_col(Var a, Var c) {
  require(c.cols() == 1 && c.rows() == a.rows(), "add_col: bias shape " + shape_str(c.value()) +
                                                     " for input " + shape_str(a.value()));
  Graph& g = *a.graph();
  Mat out = a.value();
  out.colwise() += c.value().col(0);
  return g.make(std::move(out), {a, c}, [a, c](Graph& g, const Mat& d) {
    g.accumulate(a, d);
    if (g.needs_grad(c)) g.accumulate(c, d.rowwise().sum());
  });
}

Var add_row(Var a, Var r) {
  require(r.rows() == 1 && r.cols() == a.cols(), "add_row: shape " + shape_str(r.value()) +
                                                     " for input " + shape_str(a.value()));
  Graph& g = *a.graph();
  Mat out = a.value();
  out.rowwise() += r.value().row(0);
  return g.make(std::move(out), {a, r}, [a, r](Graph& g, const Mat& d) {
    g.accumulate(a, d);
    if (g.needs_grad(r)) g.accumulate(r, d.colwise().sum());
  });
}

Var mul_col(Var a, Var c) {
  require(c.cols() == 1 && c.rows() == a.rows(), "mul_col: shape " + shape_str(c.value()) +
                                                     " for input " + shape_str(a.value()));
  Graph& g = *a.graph();
  Mat out = c.value().col(0).asDiagonal() * a.value();
  return g.make(std::move(out), {a, c}, [a, c](Graph& g, const Mat& d) {
    if (g.needs_grad(a)) g.accumulate(a, g.value(c).col(0).asDiagonal() * d);
    if (g.needs_grad(c)) g.accumulate(c, d.cwiseProduct(g.value(a)).rowwise().sum());
  });
}

Var mul_row(Var a, Var r) {
  require(r.rows() == 1 && r.cols() == a.cols(), "mul_row: shape " + shape_str(r.value()) +
                                                     " for input " + shape_str(a.value()));
  Graph& g = *a.graph();
  Mat out = a.value() * r.value().row(0).asDiagonal();
  return g.make(std::move(out), {a, r}, [a, r](Graph& g, const Mat& d) {
    if (g.needs_grad(a)) g.accumulate(a, d * g.value(r).row(0).asDiagonal());
    if (g.needs_grad(r)) g.accumulate(r, d.cwiseProduct(g.value(a)).colwise().sum());
  });
}

Var relu(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().cwiseMax(0.0), {a}, [a](Graph& g, const Mat& d) {
    g.accumulate(a, (g.value(a).array() > 0.0).select(d, 0.0));
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph();
  Mat y = a.value().array().tanh();
  return g.make(y, {a}, [a, y](Graph& g, const Mat& d) {
    g.accumulate(a, d.array() * (1.0 - y.array().square()));
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph();
  Mat y = (1.0 + (-a.value().array()).exp()).inverse();
  return g.make(y, {a}, [a, y](Graph& g, const Mat& d) {
    g.accumulate(a, d.array() * y.array() * (1.0 - y.array()));
  });
}

Var square(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().array().square(), {a}, [a](Graph& g, const Mat& d) {
    g.accumulate(a, 2.0 * d.cwiseProduct(g.value(a)));
  });
}

Var sqrt_eps(Var a, double eps) {
  Graph& g = *a.graph();
  Mat y = (a.value().array() + eps).sqrt();
  return g.make(y, {a},
                [a, y](Graph& g, const Mat& d) { g.accumulate(a, 0.5 * d.array() / y.array()); });
}

Var clamp_min_zero(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().cwiseMax(0.0), {a}, [a](Graph& g, const Mat& d) {
    g.accumulate(a, (g.value(a).array() >= 0.0).select(d, 0.0));
  });
}

Var mean_over_cols(Var a) {
  Graph& g = *a.graph();
  const auto n = a.cols();
  return g.make(a.value().rowwise().mean(), {a}, [a, n](Graph& g, const Mat& d) {
    g.accumulate(a, d.col(0).replicate(1, n) / static_cast<double>(n));
  });
}

Var mean_over_rows(Var a) {
  Graph& g = *a.graph();
  const auto n = a.rows();
  return g.make(a.value().colwise().mean(), {a}, [a, n](Graph& g, const Mat& d) {
    g.accumulate(a, d.row(0).replicate(n, 1) / static_cast<double>(n));
  });
}

Var sum(Var a) {
  Graph& g = *a.graph();
  const auto r = a.rows(), c = a.cols();
  return g.make(Mat::Constant(1, 1, a.value().sum()), {a}, [a, r, c](Graph& g, const Mat& d) {
    g.accumulate(a, Mat::Constant(r, c, d(0, 0)));
  });
}

Var abs_sum(Var a) {
  Graph& g = *a.graph();
  return g.make(Mat::Constant(1, 1, a.value().cwiseAbs().sum()), {a},
                [a](Graph& g, const Mat& d) {
                  g.accumulate(a, g.value(a).array().sign() * d(0, 0));
                });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  Graph& g = *parts.front().graph();
  return g.make(std::move(out), parts, [parts](Graph& g, const Mat& d) {
    Eigen::Index r = 0;
    for (const Var& p : parts) {
      const auto n = g.value(p).rows();
      if (g.needs_grad(p)) g.accumulate(p, d.middleRows(r, n));
      r += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Graph& g = *parts.front().graph();
  return g.make(std::move(out), parts, [parts](Graph& g, const Mat& d) {
    Eigen::Index c = 0;
    for (const Var& p : parts) {
      const auto n = g.value(p).cols();
      if (g.needs_grad(p)) g.accumulate(p, d.middleCols(c, n));
      c += n;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Graph& g = *a.graph();
  const auto r = a.rows(), c = a.cols();
  return g.make(a.value().middleRows(start, count), {a},
                [a, start, count, r, c](Graph& g, const Mat& d) {
                  Mat full = Mat::Zero(r, c);
                  full.middleRows(start, count) = d;
                  g.accumulate(a, full);
                });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Graph& g = *a.graph();
  const auto r = a.rows(), c = a.cols();
  return g.make(a.value().middleCols(start, count), {a},
                [a, start, count, r, c](Graph& g, const Mat& d) {
                  Mat full = Mat::Zero(r, c);
                  full.middleCols(start, count) = d;
                  g.accumulate(a, full);
                });
}

Var standardize_rows(Var a, double eps) {
  Graph& g = *a.graph();
  Mat y = triaan::standardize_rows(a.value(), eps);
  return g.make(y, {a}, [a, y, eps](Graph& g, const Mat& d) {
    g.accumulate(a, triaan::standardize_rows_backward(g.value(a), y, d, eps));
  });
}

Var standardize_cols(Var a, double eps) {
  Graph& g = *a.graph();
  Mat y = triaan::standardize_cols(a.value(), eps);
  return g.make(y, {a}, [a, y, eps](Graph& g, const Mat& d) {
    g.accumulate(a, triaan::standardize_cols_backward(g.value(a), y, d, eps));
  });
}

namespace {

Mat softmax_rows_value(const Mat& x) {
  Mat y = x.colwise() - x.rowwise().maxCoeff();
  y = y.array().exp();
  const Vec s = y.rowwise().sum();
  return s.cwiseInverse().asDiagonal() * y;
}

}  // namespace

Var softmax_rows(Var a) {
  Graph& g = *a.graph();
  Mat y = softmax_rows_value(a.value());
  return g.make(y, {a}, [a, y](Graph& g, const Mat& d) {
    const Vec dot = d.cwiseProduct(y).rowwise().sum();
    Mat dx = d.colwise() - dot;
    g.accumulate(a, dx.cwiseProduct(y));
  });
}

Var softmax_cols(Var a) {
  Graph& g = *a.graph();
  Mat y = softmax_rows_value(a.value().transpose()).transpose();
  return g.make(y, {a}, [a, y](Graph& g, const Mat& d) {
    const RowVec dot = d.cwiseProduct(y).colwise().sum();
    Mat dx = d.rowwise() - dot;
    g.accumulate(a, dx.cwiseProduct(y));
  });
}

namespace {

Mat im2col(const Mat& x, int kernel) {
  const Eigen::Index cin = x.rows(), t = x.cols();
  const int pad = kernel / 2;
  Mat cols = Mat::Zero(cin * kernel, t);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index dst = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index src = std::max<Eigen::Index>(0, shift);
    const Eigen::Index len = t - std::abs(shift);
    if (len <= 0) continue;
    for (Eigen::Index ci = 0; ci < cin; ++ci)
      cols.row(ci * kernel + k).segment(dst, len) = x.row(ci).segment(src, len);
  }
  return cols;
}

Mat col2im(const Mat& cols, Eigen::Index cin, Eigen::Index t, int kernel) {
  const int pad = kernel / 2;
  Mat x = Mat::Zero(cin, t);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index dst = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index src = std::max<Eigen::Index>(0, shift);
    const Eigen::Index len = t - std::abs(shift);
    if (len <= 0) continue;
    for (Eigen::Index ci = 0; ci < cin; ++ci)
      x.row(ci).segment(src, len) += cols.row(ci * kernel + k).segment(dst, len);
  }
  return x;
}

}  // namespace

Var conv1d(Var x, Var w, Var b, int kernel) {
  require(kernel >= 1 && kernel % 2 == 1, "conv1d: kernel must be odd");
  const Eigen::Index cin = x.rows(), t = x.cols();
  require(w.cols() == cin * kernel, "conv1d: weight " + shape_str(w.value()) + " for input " +
                                        shape_str(x.value()) + " and kernel " +
                                        std::to_string(kernel));
  require(b.rows() == w.rows() && b.cols() == 1, "conv1d: bias shape " + shape_str(b.value()));
  Graph& g = *x.graph();
  Mat cols = kernel == 1 ? x.value() : im2col(x.value(), kernel);
  Mat out = w.value() * cols;
  out.colwise() += b.value().col(0);
  return g.make(std::move(out), {x, w, b},
                [x, w, b, kernel, cin, t, cols = std::move(cols)](Graph& g, const Mat& d) {
                  if (g.needs_grad(w)) g.accumulate(w, d * cols.transpose());
                  if (g.needs_grad(b)) g.accumulate(b, d.rowwise().sum());
                  if (g.needs_grad(x)) {
                    Mat dcols = g.value(w).transpose() * d;
                    g.accumulate(x, kernel == 1 ? dcols : col2im(dcols, cin, t, kernel));
                  }
                });
}

Var gru(Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh) {
  const Eigen::Index hidden = w_hh.cols();
  const Eigen::Index steps = x.cols();
  require(w_hh.rows() == 3 * hidden, "gru: w_hh must be 3H x H, got " + shape_str(w_hh.value()));
  require(w_ih.rows() == 3 * hidden && w_ih.cols() == x.rows(),
          "gru: w_ih " + shape_str(w_ih.value()) + " for input " + shape_str(x.value()));
  require(b_ih.rows() == 3 * hidden && b_ih.cols() == 1, "gru: b_ih shape");
  require(b_hh.rows() == 3 * hidden && b_hh.cols() == 1, "gru: b_hh shape");

  const Mat& whh = w_hh.value();
  Mat xp = w_ih.value() * x.value();
  xp.colwise() += b_ih.value().col(0);

  Mat h_prev(hidden, steps), r(hidden, steps), z(hidden, steps), n(hidden, steps),
      gn(hidden, steps), out(hidden, steps);
  Vec h = Vec::Zero(hidden);
  Vec gh(3 * hidden);
  for (Eigen::Index t = 0; t < steps; ++t) {
    h_prev.col(t) = h;
    gh.noalias() = whh * h;
    gh += b_hh.value().col(0);
    const auto a = xp.col(t);
    r.col(t) = (1.0 + (-(a.segment(0, hidden) + gh.segment(0, hidden)).array()).exp()).inverse();
    z.col(t) = (1.0 + (-(a.segment(hidden, hidden) + gh.segment(hidden, hidden)).array()).exp())
                   .inverse();
    gn.col(t) = gh.segment(2 * hidden, hidden);
    n.col(t) = (a.segment(2 * hidden, hidden).array() + r.col(t).array() * gn.col(t).array())
                   .tanh();
    h = (1.0 - z.col(t).array()) * n.col(t).array() + z.col(t).array() * h.array();
    out.col(t) = h;
  }

  Graph& g = *x.graph();
  return g.make(out, {x, w_ih, w_hh, b_ih, b_hh},
                [x, w_ih, w_hh, b_ih, b_hh, hidden, steps, h_prev, r, z, n, gn](Graph& g,
                                                                                  const Mat& d) {
                  const Mat& whh = g.value(w_hh);
                  Mat dxp(3 * hidden, steps);
                  Mat dgh(3 * hidden, steps);
                  Vec dh_next = Vec::Zero(hidden);
                  for (Eigen::Index t = steps - 1; t >= 0; --t) {
                    const Vec dh = d.col(t) + dh_next;
                    const auto rt = r.col(t).array();
                    const auto zt = z.col(t).array();
                    const auto nt = n.col(t).array();
                    const Vec dn_pre = (dh.array() * (1.0 - zt) * (1.0 - nt.square())).matrix();
                    const Vec dz_pre =
                        (dh.array() * (h_prev.col(t).array() - nt) * zt * (1.0 - zt)).matrix();
                    const Vec dr_pre =
                        (dn_pre.array() * gn.col(t).array() * rt * (1.0 - rt)).matrix();
                    dxp.col(t) << dr_pre, dz_pre, dn_pre;
                    dgh.col(t) << dr_pre, dz_pre, (dn_pre.array() * rt).matrix();
                    dh_next = (dh.array() * zt).matrix() + whh.transpose() * dgh.col(t);
                  }
                  if (g.needs_grad(w_hh)) g.accumulate(w_hh, dgh * h_prev.transpose());
                  if (g.needs_grad(b_hh)) g.accumulate(b_hh, dgh.rowwise().sum());
                  if (g.needs_grad(w_ih)) g.accumulate(w_ih, dxp * g.value(x).transpose());
                  if (g.needs_grad(b_ih)) g.accumulate(b_ih, dxp.rowwise().sum());
                  if (g.needs_grad(x)) g.accumulate(x, g.value(w_ih).transpose() * dxp);
                });
}

}  // namespace triaan::ad
