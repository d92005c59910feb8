#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "gpens/types.hpp"

namespace gpens {

/// One month of aligned predictions and realizations.
struct PanelObs {
  MonthId month = -1;
  Vec pred;
  Vec real;
};

struct MonthlyScore {
  MonthId month_id = -1;
  double r2_t = 0.0;
  double rho_t = 0.0;
  int n = 0;
  bool r2_defined = true;   // false when the month's sum r^2 is zero
  bool rho_defined = true;  // false when either series is constant or n < 2
};

/// Pooled out-of-sample R^2 against the zero-prediction benchmark:
/// 1 - sum (r - r_hat)^2 / sum r^2 over all (asset, month) pairs.
/// Throws UndefinedMetricError when sum r^2 = 0.
double r2_pool(const std::vector<PanelObs>& obs);

/// Equal-weight average over months of the monthly R^2_t. Months with a zero
/// denominator are excluded and reported through `excluded`.
double r2_avg(const std::vector<PanelObs>& obs, std::vector<MonthId>* excluded = nullptr);

/// Spearman rank correlation: Pearson correlation of average ranks. Equals the
/// classical 1 - 6 sum d_i^2 / (n(n^2-1)) form when there are no ties.
/// Requires n >= 2 and non-constant inputs.
double spearman(const Vec& a, const Vec& b);

struct ICResult {
  double ic = 0.0;                    // time average of the defined monthly rho_t
  std::optional<double> tstat;        // one-sample t statistic of the rho_t series
  std::vector<MonthlyScore> monthly;  // one entry per input month, in input order
  std::vector<MonthId> excluded;      // months whose rho_t was undefined
};

/// Monthly cross-sectional Spearman correlations and their time average.
ICResult information_coefficient(const std::vector<PanelObs>& obs);

struct OLSResult {
  double slope = 0.0;
  double intercept = 0.0;
  double se_slope = 0.0;
  double se_intercept = 0.0;
  int n = 0;
};

/// Univariate OLS of y on x with homoskedastic standard errors. Requires
/// n >= 3 and non-constant x.
OLSResult ols_simple(const Vec& y, const Vec& x);

/// Decile labels 0..9 by ascending value; D1 (label 0) holds the lowest.
/// Sizes are floor(n/10) each, with the remainder added from the top decile
/// down; ties are broken by original index, earlier indices to the lower
/// decile.
std::vector<int> assign_deciles(const Vec& values);

/// Time-averaged 10x10 cross-sectional decile contingency table: entry (i, j)
/// is the average fraction of a month's assets landing in decile i of `a` and
/// decile j of `b`. Each column sums to ~0.1 (a decile's share of the mass).
Mat decile_copula(const std::vector<std::pair<Vec, Vec>>& monthly_ab);

}  // namespace gpens
