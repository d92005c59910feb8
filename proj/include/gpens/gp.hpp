#pragma once

#include <memory>
#include <optional>

#include "gpens/kernel.hpp"
#include "gpens/types.hpp"

namespace gpens {

/// One month's training subset: features observed at the start of the month and
/// the excess log returns realized over it.
struct TrainingSet {
  Mat features;  // n x d
  Vec targets;   // n
  MonthId month_id = -1;

  void validate() const;
  uint64_t checksum() const;
};

struct GPPrediction {
  Vec mean;  // posterior mean at the test points
  Mat cov;   // posterior covariance, exactly symmetric
};

/// Optimizer settings for the marginal-likelihood ascent.
struct OptConfig {
  int max_iters = 200;
  double grad_tol = 1e-6;
  int restarts = 3;
  // Restart draws: log-uniform for sigma and beta, uniform for alpha.
  double sigma_lo = 0.01, sigma_hi = 1.0;
  double beta_lo = 0.1, beta_hi = 100.0;
  double alpha_lo = 0.0, alpha_hi = 1.0;
  int lbfgs_memory = 8;

  uint64_t config_hash() const;
};

/// Diagnostics from a fit; consumed by the run manifest.
struct FitInfo {
  int iterations = 0;       // iterations of the winning start
  int starts_abandoned = 0; // starts that failed factorization or went non-finite
  double jitter = 0.0;      // final diagonal addition of the winning model
  double seconds = 0.0;
};

/// A trained single-month GP. Immutable after construction; safe to share
/// across threads for concurrent predict calls.
struct FittedGP {
  KernelParams params;
  TrainingSet train;
  Mat chol;       // lower-triangular L with L L^T = K + jitter I
  Vec alpha_vec;  // (K + jitter I)^-1 targets
  double mll = 0.0;
  double jitter = 0.0;  // diagonal addition actually used (>= params.noise_var)
};

/// Cholesky of K(X, X) + jitter I under the escalation policy: start at
/// noise_var; on failure multiply the addition by 10, up to 1e-4. Returns the
/// lower factor and the final jitter. Throws NumericalError (with month_id and a
/// diagnostic) when the ceiling is reached.
std::pair<Mat, double> factorize_kernel(const KernelParams& params, const Mat& X,
                                        MonthId month_id = -1);

/// log p(targets | features, params): the exact GP marginal log-likelihood with
/// zero prior mean, computed via Cholesky.
double marginal_log_likelihood(const KernelParams& params, const TrainingSet& train);

/// Gradient of the marginal log-likelihood with respect to the unconstrained
/// coordinates (log sigma, softplus^-1 alpha, log beta). noise_var is fixed and
/// does not appear.
Vec mll_gradient(const KernelParams& params, const TrainingSet& train);

/// Maximize the marginal log-likelihood by L-BFGS ascent with backtracking line
/// search, from `init` plus opt.restarts random restarts. Deterministic given
/// (seed, train.month_id). Throws NumericalError if every start fails.
FittedGP fit(const TrainingSet& train, const KernelParams& init, const OptConfig& opt,
             uint64_t seed, FitInfo* info = nullptr);

/// Rebuild the Cholesky factor and solve for a known-good parameter point, e.g.
/// when loading a persisted model. Equivalent to the tail end of fit().
FittedGP refit_at(const KernelParams& params, const TrainingSet& train);

/// Posterior mean and covariance at the test points, via triangular solves
/// against the stored factor.
GPPrediction predict(const FittedGP& model, const Mat& X_test);

/// Posterior mean only; skips the covariance solves.
Vec predict_mean(const FittedGP& model, const Mat& X_test);

/// Posterior variance (the diagonal of predict().cov) without materializing the
/// full m x m covariance. Backs the diagonal-covariance ensemble mode.
Vec predict_var(const FittedGP& model, const Mat& X_test);

}  // namespace gpens
