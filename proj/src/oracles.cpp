#include "triaan/oracles.hpp"

#include <cmath>
#include <limits>

namespace triaan::oracle {

Mat standardize_rows(const Mat& x, double eps) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    double var = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = (x(r, c) - mean) / std::sqrt(var + eps);
  }
  return y;
}

Mat standardize_cols(const Mat& x, double eps) {
  return standardize_rows(Mat(x.transpose()), eps).transpose();
}

namespace {

Mat matmul(const Mat& a, const Mat& b) {
  Mat out = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      for (Eigen::Index j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Attention attention(const Mat& q, const Mat& k, const Mat& v) {
  const Eigen::Index tq = q.rows(), tk = k.rows(), c = q.cols();
  Attention a;
  a.weights.resize(tq, tk);
  a.output = Mat::Zero(tq, v.cols());
  for (Eigen::Index i = 0; i < tq; ++i) {
    std::vector<double> logits(static_cast<std::size_t>(tk));
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < tk; ++j) {
      double dot = 0.0;
      for (Eigen::Index ch = 0; ch < c; ++ch) dot += q(i, ch) * k(j, ch);
      logits[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(c));
      top = std::max(top, logits[static_cast<std::size_t>(j)]);
    }
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - top));
    for (Eigen::Index j = 0; j < tk; ++j) {
      a.weights(i, j) = logits[static_cast<std::size_t>(j)] / z;
      for (Eigen::Index ch = 0; ch < v.cols(); ++ch) a.output(i, ch) += a.weights(i, j) * v(j, ch);
    }
  }
  return a;
}

namespace {

Mat adaptive(const Mat& x_c, const Vec& mean, const Vec& std) {
  Mat y = standardize_cols(x_c, kNormEps);
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index c = 0; c < y.cols(); ++c) y(t, c) = y(t, c) * std(c) + mean(c);
  return y;
}

}  // namespace

Duan duan(const Mat& x_c, const Mat& f_l, const AttentionParams& p, NormMode mode) {
  auto norm = [mode](const Mat& m) {
    return mode == NormMode::IN ? standardize_cols(m, kNormEps) : standardize_rows(m, kNormEps);
  };
  const Mat q = matmul(norm(x_c), p.w_q);
  const Mat k = matmul(norm(f_l), p.w_k);
  const Mat v = matmul(f_l, p.w_v);
  const Attention a = attention(q, k, v);
  const Eigen::Index tc = x_c.rows(), ts = f_l.rows(), c = x_c.cols();

  Duan d;
  d.mean = a.output;
  d.var = Mat::Zero(tc, c);
  for (Eigen::Index i = 0; i < tc; ++i)
    for (Eigen::Index ch = 0; ch < c; ++ch)
      for (Eigen::Index j = 0; j < ts; ++j) {
        const double dev = v(j, ch) - d.mean(i, ch);
        d.var(i, ch) += a.weights(i, j) * dev * dev;
      }
  d.reduced_mean = Vec::Zero(c);
  d.reduced_std = Vec::Zero(c);
  for (Eigen::Index ch = 0; ch < c; ++ch) {
    double m = 0.0, s = 0.0;
    for (Eigen::Index i = 0; i < tc; ++i) {
      m += d.mean(i, ch);
      s += d.var(i, ch);
    }
    d.reduced_mean(ch) = m / static_cast<double>(tc);
    d.reduced_std(ch) = std::sqrt(s / static_cast<double>(tc) + kStatEps);
  }
  d.converted = adaptive(x_c, d.reduced_mean, d.reduced_std);
  return d;
}

namespace {

// Softmax over layers per channel of (stats W), weighted sum of the rows.
Vec pool(const Mat& stats, const Mat& w, Mat& alpha) {
  const Mat logits = matmul(stats, w);
  const Eigen::Index layers = stats.rows(), c = stats.cols();
  alpha.resize(layers, c);
  Vec out = Vec::Zero(c);
  for (Eigen::Index ch = 0; ch < c; ++ch) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < layers; ++l) top = std::max(top, logits(l, ch));
    double z = 0.0;
    for (Eigen::Index l = 0; l < layers; ++l) z += std::exp(logits(l, ch) - top);
    for (Eigen::Index l = 0; l < layers; ++l) {
      alpha(l, ch) = std::exp(logits(l, ch) - top) / z;
      out(ch) += alpha(l, ch) * stats(l, ch);
    }
  }
  return out;
}

}  // namespace

Glan glan(const Mat& x_c, const std::vector<Mat>& pyramid, const PoolingParams& p) {
  const auto layers = static_cast<Eigen::Index>(pyramid.size());
  const Eigen::Index c = x_c.cols();
  Glan g;
  g.mu.resize(layers, c);
  g.sigma.resize(layers, c);
  for (Eigen::Index l = 0; l < layers; ++l) {
    const Mat& f = pyramid[static_cast<std::size_t>(l)];
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (Eigen::Index t = 0; t < f.rows(); ++t) m += f(t, ch);
      m /= static_cast<double>(f.rows());
      double v = 0.0;
      for (Eigen::Index t = 0; t < f.rows(); ++t) v += (f(t, ch) - m) * (f(t, ch) - m);
      g.mu(l, ch) = m;
      g.sigma(l, ch) = std::sqrt(v / static_cast<double>(f.rows()) + kStatEps);
    }
  }
  g.pooled_mu = pool(g.mu, p.w_mu, g.alpha_mu);
  g.pooled_sigma = pool(g.sigma, p.w_sigma, g.alpha_sigma);
  g.converted = adaptive(x_c, g.pooled_mu, g.pooled_sigma);
  return g;
}

Mat triaan_block(const Mat& x_c, const Mat& f_l, const std::vector<Mat>& pyramid,
                 const TriaanBlockParams& p) {
  const Mat a = oracle::duan(x_c, f_l, p.duan_in, NormMode::IN).converted;
  const Mat b = oracle::duan(x_c, f_l, p.duan_tin, NormMode::TIN).converted;
  const Eigen::Index t_len = x_c.rows(), c = x_c.cols();
  Mat fused(t_len, c);
  for (Eigen::Index t = 0; t < t_len; ++t)
    for (Eigen::Index o = 0; o < c; ++o) {
      double s = p.fuse_b(o, 0);
      for (Eigen::Index i = 0; i < c; ++i) s += p.fuse_w(o, i) * a(t, i) + p.fuse_w(o, c + i) * b(t, i);
      fused(t, o) = s;
    }
  return oracle::glan(fused, pyramid, p.glan).converted;
}

Mat conv1d(const Mat& x, const Mat& w, const Mat& b, int kernel) {
  const Eigen::Index cin = x.rows(), t_len = x.cols(), cout = w.rows();
  const int half = kernel / 2;
  Mat y(cout, t_len);
  for (Eigen::Index o = 0; o < cout; ++o)
    for (Eigen::Index t = 0; t < t_len; ++t) {
      double s = b(o, 0);
      for (Eigen::Index i = 0; i < cin; ++i)
        for (int k = 0; k < kernel; ++k) {
          const Eigen::Index src = t + k - half;
          if (src >= 0 && src < t_len) s += w(o, i * kernel + k) * x(i, src);
        }
      y(o, t) = s;
    }
  return y;
}

Mat gru(const Mat& x, const Mat& w_ih, const Mat& w_hh, const Mat& b_ih, const Mat& b_hh) {
  const Eigen::Index hidden = w_hh.cols(), t_len = x.cols(), d = x.rows();
  Mat out(hidden, t_len);
  std::vector<double> h(static_cast<std::size_t>(hidden), 0.0), next(h.size());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    for (Eigen::Index u = 0; u < hidden; ++u) {
      double gi[3], gh[3];
      for (int gate = 0; gate < 3; ++gate) {
        const Eigen::Index row = gate * hidden + u;
        gi[gate] = b_ih(row, 0);
        gh[gate] = b_hh(row, 0);
        for (Eigen::Index j = 0; j < d; ++j) gi[gate] += w_ih(row, j) * x(j, t);
        for (Eigen::Index j = 0; j < hidden; ++j)
          gh[gate] += w_hh(row, j) * h[static_cast<std::size_t>(j)];
      }
      const double r = sigmoid(gi[0] + gh[0]);
      const double z = sigmoid(gi[1] + gh[1]);
      const double n = std::tanh(gi[2] + r * gh[2]);
      next[static_cast<std::size_t>(u)] = (1.0 - z) * n + z * h[static_cast<std::size_t>(u)];
    }
    h = next;
    for (Eigen::Index u = 0; u < hidden; ++u) out(u, t) = h[static_cast<std::size_t>(u)];
  }
  return out;
}

namespace {

void rates(const std::vector<double>& genuine, const std::vector<double>& impostor, double theta,
           double& far, double& frr) {
  std::size_t fa = 0, fr = 0;
  for (double s : impostor) fa += s >= theta ? 1 : 0;
  for (double s : genuine) fr += s < theta ? 1 : 0;
  far = static_cast<double>(fa) / static_cast<double>(impostor.size());
  frr = static_cast<double>(fr) / static_cast<double>(genuine.size());
}

}  // namespace

Eer eer_exhaustive(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  std::vector<double> all(genuine);
  all.insert(all.end(), impostor.begin(), impostor.end());
  Eer best;
  best.gap = std::numeric_limits<double>::infinity();
  for (double theta : all) {
    double far, frr;
    rates(genuine, impostor, theta, far, frr);
    const double gap = std::abs(far - frr);
    if (gap < best.gap || (gap == best.gap && theta < best.threshold)) {
      best.gap = gap;
      best.threshold = theta;
      best.eer = (far + frr) / 2.0;
    }
  }
  return best;
}

std::vector<GridPoint> eer_grid(const std::vector<double>& genuine,
                                const std::vector<double>& impostor, double lo, double hi,
                                double step) {
  std::vector<GridPoint> out;
  const auto n = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
  for (long long i = 0; i <= n; ++i) {
    GridPoint p{lo + static_cast<double>(i) * step, 0.0, 0.0};
    rates(genuine, impostor, p.threshold, p.far, p.frr);
    out.push_back(p);
  }
  return out;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min(sub, std::min(d[i - 1][j], d[i][j - 1]) + 1);
    }
  return d[a.size()][b.size()];
}

GradCheck check_gradients(const GraphFn& f, const std::vector<Mat>& inputs, std::uint64_t seed,
                          double h) {
  ad::Graph g;
  std::vector<ad::Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    leaves.push_back(g.input(inputs[i], static_cast<int>(i)));
  const ad::Var out = f(g, leaves);
  Rng rng(seed);
  const Mat proj = rng.normal_matrix(out.rows(), out.cols());
  g.backward(ad::sum(ad::mul(out, g.constant(proj))));

  auto evaluate = [&](const std::vector<Mat>& xs) {
    ad::Graph e(false);
    std::vector<ad::Var> ls;
    for (std::size_t i = 0; i < xs.size(); ++i) ls.push_back(e.input(xs[i], static_cast<int>(i)));
    return f(e, ls).value().cwiseProduct(proj).sum();
  };

  // Denominator floor: inputs whose true gradient is exactly zero (a bias in
  // front of a normalization) would otherwise compare FD noise against zero.
  double total = 0.0;
  for (const ad::Var& l : leaves) total += g.grad(l).squaredNorm();
  const double floor = 1e-6 * std::sqrt(total);

  GradCheck res;
  std::vector<Mat> xs = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Mat analytic = g.grad(leaves[i]).size() ? g.grad(leaves[i])
                                                  : Mat::Zero(inputs[i].rows(), inputs[i].cols());
    Mat numeric(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index e = 0; e < inputs[i].size(); ++e) {
      const double orig = xs[i].data()[e];
      xs[i].data()[e] = orig + h;
      const double up = evaluate(xs);
      xs[i].data()[e] = orig - h;
      const double down = evaluate(xs);
      xs[i].data()[e] = orig;
      numeric.data()[e] = (up - down) / (2.0 * h);
    }
    res.entries += static_cast<std::size_t>(inputs[i].size());
    const double denom = std::max(analytic.norm() + numeric.norm(), floor);
    const double rel = denom > 0.0 ? (analytic - numeric).norm() / denom : 0.0;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_input = i;
    }
  }
  return res;
}

}  // namespace triaan::oracle
