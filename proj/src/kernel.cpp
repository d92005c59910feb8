#include "gpens/kernel.hpp"

#include <omp.h>

namespace gpens {

namespace {

constexpr double kAlphaFloor = 1e-300;  // subnormal-safe stand-in for alpha = 0

// Kernel value from precomputed norms and a pairwise distance.
inline double eval_from_parts(const KernelParams& p, double norm_x, double norm_y, double dist) {
  return p.sigma * p.sigma * (1.0 + p.alpha * norm_x) * (1.0 + p.alpha * norm_y) /
         (1.0 + dist / p.beta);
}

inline Vec row_norms(const Mat& X) {
  return X.rowwise().norm();
}

}  // namespace

RawParams to_raw(const KernelParams& p) {
  p.validate();
  RawParams raw;
  raw[0] = std::log(p.sigma);
  raw[1] = softplus_inv(std::max(p.alpha, kAlphaFloor));
  raw[2] = std::log(p.beta);
  return raw;
}

KernelParams from_raw(const RawParams& raw, double noise_var) {
  KernelParams p;
  p.sigma = std::exp(raw[0]);
  p.alpha = softplus(raw[1]);
  p.beta = std::exp(raw[2]);
  p.noise_var = noise_var;
  return p;
}

std::array<double, kNumHypers> raw_jacobian(const KernelParams& p) {
  // sigma = exp(a), alpha = softplus(b), beta = exp(c).
  // d softplus(b)/db = sigmoid(b) = 1 - exp(-alpha).
  return {p.sigma, -std::expm1(-p.alpha), p.beta};
}

double kernel_eval(const KernelParams& p, const Vec& x, const Vec& y) {
  p.validate();
  if (x.size() != y.size() || x.size() < 1)
    throw std::invalid_argument("kernel_eval: feature dimensions must match and be >= 1");
  return eval_from_parts(p, x.norm(), y.norm(), (x - y).norm());
}

Mat kernel_matrix(const KernelParams& p, const Mat& X, const Mat& Y) {
  p.validate();
  if (X.cols() != Y.cols())
    throw std::invalid_argument("kernel_matrix: column dimensions must match");
  const Eigen::Index n = X.rows(), m = Y.rows();
  const Vec nx = row_norms(X), ny = row_norms(Y);
  Mat K(n, m);
#pragma omp parallel for schedule(static) if (n * m > 4096)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      K(i, j) = eval_from_parts(p, nx(i), ny(j), (X.row(i) - Y.row(j)).norm());
    }
  }
  return K;
}

Mat kernel_matrix_sym(const KernelParams& p, const Mat& X) {
  p.validate();
  if (X.rows() < 1) throw std::invalid_argument("kernel_matrix_sym: X must be non-empty");
  const Eigen::Index n = X.rows();
  const Vec nx = row_norms(X);
  Mat K(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (n > 64)
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = eval_from_parts(p, nx(i), nx(i), 0.0);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = eval_from_parts(p, nx(i), nx(j), (X.row(i) - X.row(j)).norm());
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

std::array<Mat, kNumHypers> kernel_grad(const KernelParams& p, const Mat& X) {
  p.validate();
  if (X.rows() < 1) throw std::invalid_argument("kernel_grad: X must be non-empty");
  const Eigen::Index n = X.rows();
  const Vec nx = row_norms(X);
  const double s2 = p.sigma * p.sigma;
  Mat dS(n, n), dA(n, n), dB(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (n > 64)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double d = (i == j) ? 0.0 : (X.row(i) - X.row(j)).norm();
      const double ai = 1.0 + p.alpha * nx(i);
      const double aj = 1.0 + p.alpha * nx(j);
      const double c = 1.0 / (1.0 + d / p.beta);
      // k = sigma^2 ai aj c
      const double ds = 2.0 * p.sigma * ai * aj * c;
      const double da = s2 * (nx(i) * aj + nx(j) * ai) * c;
      const double db = s2 * ai * aj * d / ((p.beta + d) * (p.beta + d));
      dS(i, j) = ds;
      dS(j, i) = ds;
      dA(i, j) = da;
      dA(j, i) = da;
      dB(i, j) = db;
      dB(j, i) = db;
    }
  }
  return {std::move(dS), std::move(dA), std::move(dB)};
}

}  // namespace gpens
