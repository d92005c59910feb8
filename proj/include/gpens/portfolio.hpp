#pragma once

#include <array>
#include <string>
#include <vector>

#include "gpens/types.hpp"

namespace gpens {

struct PortfolioConfig {
  double gamma = 1.0;     // uncertainty aversion of the mean-variance program
  bool diag_cov = false;  // use only the diagonal of the predictive covariance
};

inline constexpr int kNumStrategies = 5;
enum class Strategy { EW = 0, VW = 1, UW = 2, PW = 3, PUW = 4 };
const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Equal weights over n assets.
Vec ew_weights(Eigen::Index n);

/// Market-cap proportional weights.
Vec vw_weights(const Vec& caps);

/// Minimum-uncertainty weights: argmin w' Sigma w over the simplex.
/// Throws NumericalError (carrying the residual) if the solver stalls above
/// the 1e-8 KKT certificate.
Vec uw_weights(const Mat& Sigma);

/// Level-adjusted predicted return s_hat within one decile: top-half deciles
/// measure distance above the decile minimum, bottom-half distance below the
/// decile maximum (so "more extreme" is always larger).
Vec level_adjusted(const Vec& preds, bool top_half);

/// s_hat normalized to the simplex; constant predictions (all-zero s_hat)
/// fall back to equal weights, reported through `fell_back`.
Vec pw_weights(const Vec& s_hat, bool* fell_back = nullptr);

/// Mean-variance weights: argmax w's_hat - (gamma/2) w' Sigma w over the
/// simplex. Errors as uw_weights.
Vec puw_weights(const Vec& s_hat, const Mat& Sigma, double gamma);

/// One month's weights for every strategy and decile. Decile membership lists
/// are in ascending original-index order; weight vectors align with them.
struct MonthWeights {
  MonthId month = -1;
  std::vector<int> decile;                      // per asset, 0..9 (D1..D10)
  std::array<std::vector<int>, 10> members;     // asset indices per decile
  std::array<std::array<Vec, 10>, kNumStrategies> w;
  std::array<std::array<bool, 10>, kNumStrategies> pw_fallback{};  // PW/PUW degeneracy
};

/// Builds deciles from the predicted means and solves all five weighting
/// schemes. `Sigma` is the full predictive covariance (or diagonal when
/// cfg.diag_cov). Decile QP solves run under OpenMP; outputs depend only on
/// inputs.
MonthWeights build_month_weights(MonthId month, const Vec& pred, const Mat& Sigma,
                                 const Vec& caps, const PortfolioConfig& cfg);

/// Same solves, fed per-decile covariance blocks (indexed like the decile
/// membership lists derived from `pred`) instead of the full matrix — the
/// form the run outputs store on disk.
MonthWeights build_month_weights_blocks(MonthId month, const Vec& pred,
                                        const std::array<Mat, 10>& Sigma_blocks, const Vec& caps,
                                        const PortfolioConfig& cfg);

struct StrategyStats {
  double ann_mean = 0.0;  // monthly mean x 12
  double ann_sd = 0.0;    // monthly sample SD x sqrt(12)
  double sharpe = 0.0;    // ann_mean / ann_sd
};

/// Annualized mean/SD/Sharpe of a monthly simple-excess-return series.
/// Throws UndefinedMetricError for n < 2 or zero variance.
StrategyStats evaluate_series(const std::vector<double>& monthly);

/// Cumulative excess log returns: running sum of log(1 + monthly simple).
/// Throws UndefinedMetricError if a gross return is non-positive.
std::vector<double> cumulative_log(const std::vector<double>& monthly);

}  // namespace gpens
