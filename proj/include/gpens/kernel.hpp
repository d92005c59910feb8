#pragma once

#include <array>
#include <cmath>

#include "gpens/types.hpp"

namespace gpens {

/// Hyper-parameters of the covariance kernel
///
///   k(x, x') = sigma^2 (1 + alpha ||x||) (1 + alpha ||x'||) (1 + ||x - x'|| / beta)^-1
///
/// with Euclidean norms. noise_var is the fixed observation noise variance added
/// to the kernel matrix diagonal; it is not optimized.
struct KernelParams {
  double sigma = 1.0;
  double alpha = 0.0;
  double beta = 1.0;
  double noise_var = 1e-10;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("KernelParams: sigma must be > 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("KernelParams: alpha must be >= 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("KernelParams: beta must be > 0");
    if (!(noise_var >= 0.0) || !std::isfinite(noise_var))
      throw std::invalid_argument("KernelParams: noise_var must be >= 0");
  }

  bool operator==(const KernelParams&) const = default;
};

/// Number of trainable hyper-parameters (sigma, alpha, beta). noise_var is fixed.
inline constexpr int kNumHypers = 3;

/// Unconstrained coordinates used by the optimizer: (log sigma, softplus^-1 alpha,
/// log beta). Keeps sigma, beta > 0 and alpha > 0 without a constrained solver.
struct RawParams {
  std::array<double, kNumHypers> v{};

  double& operator[](int i) { return v[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline double softplus_inv(double y) {
  // y > 0; for large y the identity map avoids exp overflow.
  return y > 30.0 ? y : std::log(std::expm1(y));
}

/// Map natural (sigma, alpha, beta) to unconstrained coordinates. alpha is
/// floored at a tiny positive value so alpha = 0 inits remain representable.
RawParams to_raw(const KernelParams& p);

/// Inverse of to_raw; noise_var is carried through unchanged.
KernelParams from_raw(const RawParams& raw, double noise_var);

/// Jacobian d(sigma, alpha, beta)/d(raw), diagonal entries.
std::array<double, kNumHypers> raw_jacobian(const KernelParams& p);

/// Evaluate k(x, y). Throws std::invalid_argument on dimension mismatch.
double kernel_eval(const KernelParams& p, const Vec& x, const Vec& y);

/// Kernel matrix K with K(i, j) = k(X.row(i), Y.row(j)). OpenMP-parallel over
/// entries; each entry is written independently, so the result is deterministic
/// for any thread count.
Mat kernel_matrix(const KernelParams& p, const Mat& X, const Mat& Y);

/// Symmetric kernel matrix K(X, X); fills one triangle and mirrors it, so the
/// result is exactly symmetric.
Mat kernel_matrix_sym(const KernelParams& p, const Mat& X);

/// Analytic partial derivatives of K(X, X) with respect to (sigma, alpha, beta),
/// in that order. Each matrix is exactly symmetric.
std::array<Mat, kNumHypers> kernel_grad(const KernelParams& p, const Mat& X);

}  // namespace gpens
