#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volley/errors.hpp"
#include "volley/matrix.hpp"

namespace volley {

// Multiclass logistic regression via the quadratic gradient: the fixed
// diagonal bound B-bar replaces the Hessian, so one reciprocal per column is
// the only division the whole training run needs.

struct LrDataset {
  Matrix X;             // n x (1+d); column 0 is the bias, all ones
  std::vector<int> y;   // labels in [0, c)
  std::size_t c = 0;

  std::size_t n() const { return X.rows(); }
  std::size_t d() const { return X.cols() == 0 ? 0 : X.cols() - 1; }

  void validate() const {
    if (X.rows() == 0 || X.cols() == 0) throw ShapeMismatch("dataset: X is empty");
    if (y.size() != X.rows()) throw ShapeMismatch("dataset: label count != sample count");
    if (c == 0) throw LabelOutOfRange("dataset: class count is zero");
    for (std::size_t i = 0; i < X.rows(); ++i)
      if (X(i, 0) != 1.0) throw ShapeMismatch("dataset: bias column must be all ones");
    for (int l : y)
      if (l < 0 || static_cast<std::size_t>(l) >= c)
        throw LabelOutOfRange("dataset: label " + std::to_string(l) + " outside [0, " +
                              std::to_string(c) + ")");
  }
};

inline Matrix one_hot(const std::vector<int>& y, std::size_t c) {
  Matrix m(y.size(), c);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= c)
      throw LabelOutOfRange("one_hot: label " + std::to_string(y[i]) + " outside [0, " +
                            std::to_string(c) + ")");
    m(i, static_cast<std::size_t>(y[i])) = 1.0;
  }
  return m;
}

// P[i][j] = exp(z_ij) / sum_k exp(z_ik) with z = X*W^T, computed with the
// row max subtracted first; the shift cancels, the overflow does not.
inline Matrix softmax_probs(const Matrix& x, const Matrix& w) {
  if (w.cols() != x.cols())
    throw ShapeMismatch("softmax_probs: W has " + std::to_string(w.cols()) + " columns, X has " +
                        std::to_string(x.cols()));
  const std::size_t n = x.rows(), c = w.rows();
  Matrix p(n, c);
  std::vector<double> z(c);
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = -1e308;
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(j, k);
      z[j] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      z[j] = std::exp(z[j] - zmax);
      sum += z[j];
    }
    for (std::size_t j = 0; j < c; ++j) p(i, j) = z[j] / sum;
  }
  return p;
}

// sum_i ( z_{i, y_i} - logsumexp(z_i) ); always <= 0, and exactly
// n*ln(1/c) at W = 0.
inline double log_likelihood(const Matrix& x, const Matrix& yh, const Matrix& w) {
  if (yh.rows() != x.rows() || yh.cols() != w.rows() || w.cols() != x.cols())
    throw ShapeMismatch("log_likelihood: dimension mismatch");
  const std::size_t n = x.rows(), c = w.rows();
  std::vector<double> z(c);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = -1e308;
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(j, k);
      z[j] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[j] - zmax);
    const double lse = zmax + std::log(sum);
    for (std::size_t j = 0; j < c; ++j) ll += yh(i, j) * (z[j] - lse);
  }
  return ll;
}

// (Yh - P)^T * X, one row per class.
inline Matrix gradient(const Matrix& x, const Matrix& yh, const Matrix& p) {
  if (yh.rows() != x.rows() || p.rows() != x.rows() || yh.cols() != p.cols())
    throw ShapeMismatch("gradient: dimension mismatch");
  const std::size_t c = yh.cols(), m = x.cols();
  Matrix g(c, m);
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t k = 0; k < m; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) s += (yh(i, j) - p(i, j)) * x(i, k);
      g(j, k) = s;
    }
  return g;
}

namespace detail {

// Column-wise absolute sums of -1/2 X^T X, plus the regularizer: the
// diagonal dominance bound, before taking reciprocals.
inline std::vector<double> bbar_row(const Matrix& x, double epsilon) {
  const std::size_t m = x.cols();
  std::vector<double> row(m, epsilon);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) dot += x(r, i) * x(r, j);
      row[j] += 0.5 * std::abs(dot);
    }
  return row;
}

}  // namespace detail

// B-bar[0][j] = epsilon + sum_i |(-1/2 X^T X)[i][j]|, every class row a copy
// of row 0; entries returned already inverted so training multiplies.
inline Matrix build_bbar_inv(const Matrix& x, std::size_t c, double epsilon = 1e-8) {
  const auto row = detail::bbar_row(x, epsilon);
  Matrix out(c, x.cols());
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = 1.0 / row[j];
  return out;
}

inline Matrix quadratic_gradient(const Matrix& g, const Matrix& bbar_inv) {
  if (g.rows() != bbar_inv.rows() || g.cols() != bbar_inv.cols())
    throw ShapeMismatch("quadratic_gradient: dimension mismatch");
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = g.values()[i] * bbar_inv.values()[i];
  return out;
}

inline double max_abs(const Matrix& m) {
  double worst = 0.0;
  for (double v : m.values()) worst = std::max(worst, std::abs(v));
  return worst;
}

struct TraceRow {
  std::size_t iter;      // 1-based
  double loglik;         // of the updated W
  double grad_maxnorm;   // of this iteration's raw gradient
};

struct TrainResult {
  Matrix W;
  std::vector<TraceRow> trace;
};

// Enhanced NAG. Gradients are taken at the lookahead point V; the quadratic
// gradient G replaces g in both halves of the interleave. gamma decays as
// 1/(n*count) with count starting at 1.
inline TrainResult train_nag(const LrDataset& ds, std::size_t kappa, double epsilon = 1e-8) {
  ds.validate();
  if (kappa < 1) throw Error("train_nag: iteration count must be at least 1");
  const Matrix yh = one_hot(ds.y, ds.c);
  const Matrix bbar_inv = build_bbar_inv(ds.X, ds.c, epsilon);

  Matrix w(ds.c, ds.X.cols());
  Matrix v(ds.c, ds.X.cols());
  double alpha0 = 0.01;
  double alpha1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha0 * alpha0));

  TrainResult res;
  for (std::size_t count = 1; count <= kappa; ++count) {
    const Matrix p = softmax_probs(ds.X, v);
    const Matrix g = gradient(ds.X, yh, p);
    const Matrix gq = quadratic_gradient(g, bbar_inv);

    const double eta = (1.0 - alpha0) / alpha1;
    const double gamma = 1.0 / (static_cast<double>(ds.n()) * static_cast<double>(count));

    Matrix w_temp(ds.c, ds.X.cols());
    for (std::size_t i = 0; i < w_temp.values().size(); ++i)
      w_temp.values()[i] = w.values()[i] + (1.0 + gamma) * gq.values()[i];
    for (std::size_t i = 0; i < w.values().size(); ++i)
      w.values()[i] = (1.0 - eta) * w_temp.values()[i] + eta * v.values()[i];
    v = w_temp;

    alpha0 = alpha1;
    alpha1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * alpha0 * alpha0));

    res.trace.push_back({count, log_likelihood(ds.X, yh, w), max_abs(g)});
  }
  res.W = std::move(w);
  return res;
}

// Enhanced Adagrad: the accumulator collects squared quadratic gradients and
// the rate keeps the verbatim 1.0 + 0.01 numerator.
inline TrainResult train_adagrad(const LrDataset& ds, std::size_t kappa, double epsilon = 1e-8) {
  ds.validate();
  if (kappa < 1) throw Error("train_adagrad: iteration count must be at least 1");
  const Matrix yh = one_hot(ds.y, ds.c);
  const Matrix bbar_inv = build_bbar_inv(ds.X, ds.c, epsilon);

  Matrix w(ds.c, ds.X.cols());
  Matrix gt(ds.c, ds.X.cols());

  TrainResult res;
  for (std::size_t count = 1; count <= kappa; ++count) {
    const Matrix p = softmax_probs(ds.X, w);
    const Matrix g = gradient(ds.X, yh, p);
    const Matrix gq = quadratic_gradient(g, bbar_inv);

    for (std::size_t i = 0; i < w.values().size(); ++i) {
      gt.values()[i] += gq.values()[i] * gq.values()[i];
      const double rate = (1.0 + 0.01) / std::sqrt(epsilon + gt.values()[i]);
      w.values()[i] += rate * gq.values()[i];
    }

    res.trace.push_back({count, log_likelihood(ds.X, yh, w), max_abs(g)});
  }
  res.W = std::move(w);
  return res;
}

// H = sum_i M_i kron (x_i^T x_i), with M_i[j][j] = p_ij (p_ij - 1) and
// M_i[j][k] = p_ij p_ik off the diagonal: the true Hessian of the
// log-likelihood, order c*(1+d), symmetric negative semidefinite.
inline Matrix exact_hessian(const Matrix& x, const Matrix& p) {
  if (p.rows() != x.rows()) throw ShapeMismatch("exact_hessian: P rows != X rows");
  const std::size_t c = p.cols(), m = x.cols();
  Matrix h(c * m, c * m);
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
          double s = 0.0;
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const double mi =
                (j == k) ? p(i, j) * (p(i, j) - 1.0) : p(i, j) * p(i, k);
            // grouping keeps H bitwise symmetric: swapping (j,a) with (k,b)
            // only commutes the factor pairs
            s += mi * (x(i, a) * x(i, b));
          }
          h(j * m + a, k * m + b) = s;
        }
  return h;
}

struct DominanceResult {
  double min_eigenvalue;
  bool pass;
};

// The convergence claim behind the whole construction: B-bar (as a diagonal
// matrix of order c*(1+d), before reciprocals) dominates -H at any W. Checked
// as an eigenvalue assertion with a 1e-8 slack.
inline DominanceResult dominance_check(const Matrix& x, const Matrix& w, double epsilon = 1e-8) {
  if (w.cols() != x.cols()) throw ShapeMismatch("dominance_check: W cols != X cols");
  const std::size_t c = w.rows(), m = x.cols();
  const auto bbar = detail::bbar_row(x, epsilon);
  const Matrix h = exact_hessian(x, softmax_probs(x, w));

  Eigen::MatrixXd a(c * m, c * m);
  for (std::size_t r = 0; r < c * m; ++r)
    for (std::size_t s = 0; s < c * m; ++s) a(static_cast<Eigen::Index>(r),
                                              static_cast<Eigen::Index>(s)) = h(r, s);
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      const auto idx = static_cast<Eigen::Index>(j * m + i);
      a(idx, idx) += bbar[i];
    }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  const double min_eig = solver.eigenvalues().minCoeff();
  return {min_eig, min_eig >= -1e-8};
}

}  // namespace volley
