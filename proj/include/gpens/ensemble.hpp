#pragma once

#include <map>
#include <optional>
#include <vector>

#include "gpens/gp.hpp"

namespace gpens {

enum class WeightScheme { Equal, MSE };

/// Mixing weights over the per-month experts. Keys are month ids, so every
/// iteration over the map is in a fixed (sorted) order — summations are
/// bitwise reproducible regardless of how the models were produced.
struct MixingWeights {
  std::map<MonthId, double> weights;
  WeightScheme scheme = WeightScheme::Equal;
  std::optional<MonthId> calibration_month;
  std::map<MonthId, double> mse;  // per-model calibration MSE (MSE scheme only)

  /// Checks: non-negative, sum 1 within 1e-12; MSE carries a calibration month
  /// with weight 0, Equal carries none.
  void validate() const;
};

/// Gaussian-mixture moments for one test cross-section.
struct MixturePrediction {
  Vec mean;  // r_hat
  Mat cov;   // Sigma_hat; diagonal matrix when built in diagonal mode
  MixingWeights weights;
  std::map<MonthId, Vec> component_means;  // kept for diagnostics
};

using ModelMap = std::map<MonthId, const FittedGP*>;

const char* weight_scheme_name(WeightScheme s);  // "equal" | "mse"
WeightScheme parse_weight_scheme(const std::string& s);

/// Weight 1/|months| on each listed month.
MixingWeights equal_weights(const std::vector<MonthId>& months);

/// Inverse-MSE weights from one held-out calibration cross-section
/// (features at the start of the calibration month, returns realized over it).
/// The calibration month itself enters the map with weight 0. Models whose
/// calibration MSE is exactly 0 split all the weight between them (the limit
/// of the inverse-MSE formula).
MixingWeights mse_weights(const ModelMap& models, const Mat& calib_X, const Vec& calib_r,
                          MonthId calib_month);

/// One model's mean squared prediction error on a calibration cross-section.
double calibration_mse(const FittedGP& model, const Mat& calib_X, const Vec& calib_r);

/// Normalization step of mse_weights, exposed so callers that cache MSE values
/// (the window-length sweep) produce identical weights.
MixingWeights weights_from_mse(const std::map<MonthId, double>& mse, MonthId calib_month);

/// Mixture mean and covariance:
///   mean = sum_j w_j m_j
///   cov  = sum_j w_j (k_j + m_j m_j') - mean mean'
/// diag_cov = true computes only the diagonal (stored as a diagonal matrix),
/// skipping the per-component m x m covariance solves.
MixturePrediction mix(const ModelMap& models, const MixingWeights& w, const Mat& X_test,
                      bool diag_cov = false);

/// Mixture mean only; the cheap path used by window-length sweeps.
Vec mix_mean(const ModelMap& models, const MixingWeights& w, const Mat& X_test);

}  // namespace gpens
