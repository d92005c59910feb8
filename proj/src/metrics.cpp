#include "gpens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gpens/ranks.hpp"

namespace gpens {

namespace {

void check_obs(const std::vector<PanelObs>& obs, const char* where) {
  if (obs.empty()) throw std::invalid_argument(std::string(where) + ": no observations");
  for (const auto& o : obs) {
    if (o.pred.size() != o.real.size() || o.pred.size() == 0)
      throw std::invalid_argument(std::string(where) + ": misaligned month " +
                                  std::to_string(o.month));
    if (!o.pred.allFinite() || !o.real.allFinite())
      throw std::invalid_argument(std::string(where) + ": non-finite entries in month " +
                                  std::to_string(o.month));
  }
}

double monthly_r2(const PanelObs& o, bool* defined) {
  const double denom = o.real.squaredNorm();
  if (denom == 0.0) {
    *defined = false;
    return 0.0;
  }
  *defined = true;
  return 1.0 - (o.real - o.pred).squaredNorm() / denom;
}

}  // namespace

double r2_pool(const std::vector<PanelObs>& obs) {
  check_obs(obs, "r2_pool");
  double sse = 0.0, ssr = 0.0;
  for (const auto& o : obs) {
    sse += (o.real - o.pred).squaredNorm();
    ssr += o.real.squaredNorm();
  }
  if (ssr == 0.0) throw UndefinedMetricError("r2_pool: all realized returns are zero");
  return 1.0 - sse / ssr;
}

double r2_avg(const std::vector<PanelObs>& obs, std::vector<MonthId>* excluded) {
  check_obs(obs, "r2_avg");
  double sum = 0.0;
  int count = 0;
  for (const auto& o : obs) {
    bool defined = false;
    const double r2 = monthly_r2(o, &defined);
    if (!defined) {
      if (excluded) excluded->push_back(o.month);
      continue;
    }
    sum += r2;
    ++count;
  }
  if (count == 0) throw UndefinedMetricError("r2_avg: every month has a zero denominator");
  return sum / static_cast<double>(count);
}

double spearman(const Vec& a, const Vec& b) {
  const Eigen::Index n = a.size();
  if (n != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (n < 2) throw UndefinedMetricError("spearman: need at least two observations");
  const Vec ra = average_ranks(a);
  const Vec rb = average_ranks(b);
  const double ma = ra.mean(), mb = rb.mean();
  const Vec da = ra.array() - ma;
  const Vec db = rb.array() - mb;
  const double va = da.squaredNorm(), vb = db.squaredNorm();
  if (va == 0.0 || vb == 0.0)
    throw UndefinedMetricError("spearman: constant ranks (all values tied)");
  return da.dot(db) / std::sqrt(va * vb);
}

ICResult information_coefficient(const std::vector<PanelObs>& obs) {
  check_obs(obs, "information_coefficient");
  ICResult out;
  std::vector<double> rhos;
  for (const auto& o : obs) {
    MonthlyScore s;
    s.month_id = o.month;
    s.n = static_cast<int>(o.pred.size());
    s.r2_t = monthly_r2(o, &s.r2_defined);
    try {
      s.rho_t = spearman(o.pred, o.real);
      rhos.push_back(s.rho_t);
    } catch (const UndefinedMetricError&) {
      s.rho_defined = false;
      s.rho_t = 0.0;
      out.excluded.push_back(o.month);
    }
    out.monthly.push_back(s);
  }
  if (rhos.empty())
    throw UndefinedMetricError("information_coefficient: no month with a defined rho_t");
  const double t_months = static_cast<double>(rhos.size());
  double sum = 0.0;
  for (double r : rhos) sum += r;
  out.ic = sum / t_months;
  if (rhos.size() >= 2) {
    double ss = 0.0;
    for (double r : rhos) ss += (r - out.ic) * (r - out.ic);
    const double sd = std::sqrt(ss / (t_months - 1.0));
    if (sd > 0.0) out.tstat = out.ic / (sd / std::sqrt(t_months));
  }
  return out;
}

OLSResult ols_simple(const Vec& y, const Vec& x) {
  const Eigen::Index n = y.size();
  if (n != x.size()) throw std::invalid_argument("ols_simple: length mismatch");
  if (n < 3) throw UndefinedMetricError("ols_simple: need at least three observations");
  const double mx = x.mean(), my = y.mean();
  const Vec dx = x.array() - mx;
  const Vec dy = y.array() - my;
  const double sxx = dx.squaredNorm();
  if (sxx == 0.0) throw UndefinedMetricError("ols_simple: regressor is constant");
  OLSResult r;
  r.n = static_cast<int>(n);
  r.slope = dx.dot(dy) / sxx;
  r.intercept = my - r.slope * mx;
  const Vec resid = dy - r.slope * dx;
  const double s2 = resid.squaredNorm() / static_cast<double>(n - 2);
  r.se_slope = std::sqrt(s2 / sxx);
  r.se_intercept = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
  return r;
}

std::vector<int> assign_deciles(const Vec& values) {
  const Eigen::Index n = values.size();
  if (n < 1) throw std::invalid_argument("assign_deciles: empty input");
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  // floor(n/10) per decile; remaining assets go to D10, then D9, ...
  const Eigen::Index base = n / 10;
  const Eigen::Index rem = n % 10;
  std::vector<int> labels(static_cast<size_t>(n), 0);
  Eigen::Index pos = 0;
  for (int d = 0; d < 10; ++d) {
    const Eigen::Index size = base + (d >= 10 - rem ? 1 : 0);
    for (Eigen::Index k = 0; k < size; ++k) labels[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = d;
  }
  return labels;
}

Mat decile_copula(const std::vector<std::pair<Vec, Vec>>& monthly_ab) {
  if (monthly_ab.empty()) throw std::invalid_argument("decile_copula: no months");
  Mat acc = Mat::Zero(10, 10);
  for (const auto& [a, b] : monthly_ab) {
    if (a.size() != b.size() || a.size() < 1)
      throw std::invalid_argument("decile_copula: misaligned month");
    const auto da = assign_deciles(a);
    const auto db = assign_deciles(b);
    Mat c = Mat::Zero(10, 10);
    for (size_t i = 0; i < da.size(); ++i) c(da[i], db[i]) += 1.0;
    acc += c / static_cast<double>(a.size());
  }
  return acc / static_cast<double>(monthly_ab.size());
}

}  // namespace gpens
