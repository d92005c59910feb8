#include "gpens/simplex_qp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace gpens {

Vec project_simplex(const Vec& v) {
  const Eigen::Index n = v.size();
  if (n < 1) throw std::invalid_argument("project_simplex: empty input");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double tau = 0.0;
  int rho = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[static_cast<size_t>(j)];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<size_t>(j)] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      tau = t;
    }
  }
  (void)rho;
  return (v.array() - tau).max(0.0).matrix();
}

namespace {

double kkt_residual(const Mat& Q, const Vec& b, const Vec& w) {
  const Vec g = Q * w - b;
  return (w - project_simplex(w - g)).cwiseAbs().maxCoeff();
}

// Largest eigenvalue of symmetric PSD Q by power iteration from a fixed start.
double spectral_norm_est(const Mat& Q) {
  const Eigen::Index n = Q.rows();
  Vec v = Vec::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 64; ++it) {
    Vec qv = Q * v;
    const double nrm = qv.norm();
    if (nrm <= 0.0) return 0.0;
    v = qv / nrm;
    lambda = nrm;
  }
  return lambda;
}

}  // namespace

SimplexQPResult solve_simplex_qp(const Mat& Q, const Vec& b, const SimplexQPOptions& opts) {
  const Eigen::Index n = b.size();
  if (Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("solve_simplex_qp: Q must be n x n with n = len(b)");
  if (n < 1) throw std::invalid_argument("solve_simplex_qp: empty problem");

  SimplexQPResult res;
  if (n == 1) {
    res.w = Vec::Ones(1);
    res.kkt_residual = 0.0;
    res.converged = true;
    return res;
  }

  const Mat Qs = 0.5 * (Q + Q.transpose());
  const double lam = spectral_norm_est(Qs);
  const double bscale = b.cwiseAbs().maxCoeff();

  // Degenerate quadratic: linear objective over the simplex. Optimum is a
  // vertex at argmax b, or anything (take uniform) when b is constant.
  if (lam <= 1e-14 * std::max(1.0, bscale)) {
    if (b.maxCoeff() - b.minCoeff() <= 0.0) {
      res.w = Vec::Constant(n, 1.0 / static_cast<double>(n));
    } else {
      Eigen::Index arg = 0;
      b.maxCoeff(&arg);
      res.w = Vec::Zero(n);
      res.w(arg) = 1.0;
    }
    res.kkt_residual = kkt_residual(Qs, b, res.w);
    res.converged = res.kkt_residual < opts.tol;
    return res;
  }

  const double step = 1.0 / (1.02 * lam);
  Vec x = Vec::Constant(n, 1.0 / static_cast<double>(n));
  Vec y = x;
  double t = 1.0;
  double resid = kkt_residual(Qs, b, x);
  int iter = 0;
  for (; iter < opts.max_iters && resid >= opts.tol; ++iter) {
    const Vec g = Qs * y - b;
    Vec x_new = project_simplex(y - step * g);
    // Gradient-based momentum restart keeps the acceleration monotone enough.
    if (g.dot(x_new - x) > 0.0) {
      t = 1.0;
      y = x_new;
    } else {
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_new + ((t - 1.0) / t_new) * (x_new - x);
      t = t_new;
    }
    x = std::move(x_new);
    if ((iter & 7) == 0 || iter == opts.max_iters - 1) resid = kkt_residual(Qs, b, x);
  }
  res.w = std::move(x);
  res.kkt_residual = kkt_residual(Qs, b, res.w);
  res.iterations = iter;
  res.converged = res.kkt_residual < std::max(opts.tol, 1e-8);
  return res;
}

}  // namespace gpens
