#include "gpens/portfolio.hpp"

#include <cmath>

#include "gpens/metrics.hpp"
#include "gpens/simplex_qp.hpp"

namespace gpens {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::EW: return "ew";
    case Strategy::VW: return "vw";
    case Strategy::UW: return "uw";
    case Strategy::PW: return "pw";
    case Strategy::PUW: return "puw";
  }
  throw std::invalid_argument("unknown strategy");
}

Strategy parse_strategy(const std::string& name) {
  for (int s = 0; s < kNumStrategies; ++s)
    if (name == strategy_name(static_cast<Strategy>(s))) return static_cast<Strategy>(s);
  throw ConfigError("unknown strategy '" + name + "' (expected ew|vw|uw|pw|puw)");
}

Vec ew_weights(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("ew_weights: empty decile");
  return Vec::Constant(n, 1.0 / static_cast<double>(n));
}

Vec vw_weights(const Vec& caps) {
  if (caps.size() < 1) throw std::invalid_argument("vw_weights: empty decile");
  if ((caps.array() <= 0.0).any() || !caps.allFinite())
    throw std::invalid_argument("vw_weights: market caps must be positive");
  return caps / caps.sum();
}

namespace {

Vec solve_or_throw(const Mat& Q, const Vec& b, const char* what) {
  SimplexQPResult r = solve_simplex_qp(Q, b);
  if (!r.converged)
    throw NumericalError(std::string(what) + ": QP stalled above the KKT certificate", -1,
                         r.kkt_residual);
  return r.w;
}

}  // namespace

Vec uw_weights(const Mat& Sigma) {
  if (Sigma.rows() != Sigma.cols() || Sigma.rows() < 1)
    throw std::invalid_argument("uw_weights: Sigma must be square and non-empty");
  // min w'Sigma w = min 0.5 w'(2 Sigma)w
  return solve_or_throw(2.0 * Sigma, Vec::Zero(Sigma.rows()), "uw_weights");
}

Vec level_adjusted(const Vec& preds, bool top_half) {
  if (preds.size() < 1) throw std::invalid_argument("level_adjusted: empty decile");
  if (top_half) return preds.array() - preds.minCoeff();
  return preds.maxCoeff() - preds.array();
}

Vec pw_weights(const Vec& s_hat, bool* fell_back) {
  if (s_hat.size() < 1) throw std::invalid_argument("pw_weights: empty decile");
  if ((s_hat.array() < 0.0).any())
    throw std::invalid_argument("pw_weights: level-adjusted predictions must be >= 0");
  const double sum = s_hat.sum();
  if (fell_back) *fell_back = (sum == 0.0);
  if (sum == 0.0) return ew_weights(s_hat.size());
  return s_hat / sum;
}

Vec puw_weights(const Vec& s_hat, const Mat& Sigma, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("puw_weights: gamma must be > 0");
  if (Sigma.rows() != s_hat.size() || Sigma.cols() != s_hat.size())
    throw std::invalid_argument("puw_weights: dimension mismatch");
  // max w's - (gamma/2) w'Sigma w  ==  min 0.5 w'(gamma Sigma)w - s'w
  return solve_or_throw(gamma * Sigma, s_hat, "puw_weights");
}

namespace {

void init_deciles(MonthWeights& out, const Vec& pred) {
  out.decile = assign_deciles(pred);
  for (size_t i = 0; i < out.decile.size(); ++i)
    out.members[static_cast<size_t>(out.decile[i])].push_back(static_cast<int>(i));
}

void solve_decile(MonthWeights& out, int d, const Vec& pd, Mat Sd, const Vec& cd,
                  const PortfolioConfig& cfg) {
  const auto sd = static_cast<size_t>(d);
  if (cfg.diag_cov) Sd = Sd.diagonal().asDiagonal();
  const Vec s_hat = level_adjusted(pd, d >= 5);
  bool fb = false;
  out.w[static_cast<size_t>(Strategy::EW)][sd] = ew_weights(pd.size());
  out.w[static_cast<size_t>(Strategy::VW)][sd] = vw_weights(cd);
  out.w[static_cast<size_t>(Strategy::UW)][sd] = uw_weights(Sd);
  out.w[static_cast<size_t>(Strategy::PW)][sd] = pw_weights(s_hat, &fb);
  out.w[static_cast<size_t>(Strategy::PUW)][sd] = puw_weights(s_hat, Sd, cfg.gamma);
  out.pw_fallback[static_cast<size_t>(Strategy::PW)][sd] = fb;
  out.pw_fallback[static_cast<size_t>(Strategy::PUW)][sd] = fb;
}

}  // namespace

MonthWeights build_month_weights(MonthId month, const Vec& pred, const Mat& Sigma,
                                 const Vec& caps, const PortfolioConfig& cfg) {
  const Eigen::Index n = pred.size();
  if (Sigma.rows() != n || Sigma.cols() != n || caps.size() != n)
    throw std::invalid_argument("build_month_weights: dimension mismatch");
  MonthWeights out;
  out.month = month;
  init_deciles(out, pred);

  // Deciles are independent problems; iterations inside the QP are serial.
  // Exceptions cannot cross the parallel region, so capture and rethrow.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int d = 0; d < 10; ++d) {
    try {
      const auto& mem = out.members[static_cast<size_t>(d)];
      const auto nd = static_cast<Eigen::Index>(mem.size());
      if (nd == 0) continue;
      Vec pd(nd), cd(nd);
      Mat Sd(nd, nd);
      for (Eigen::Index i = 0; i < nd; ++i) {
        pd(i) = pred(mem[static_cast<size_t>(i)]);
        cd(i) = caps(mem[static_cast<size_t>(i)]);
        for (Eigen::Index j = 0; j < nd; ++j)
          Sd(i, j) = Sigma(mem[static_cast<size_t>(i)], mem[static_cast<size_t>(j)]);
      }
      solve_decile(out, d, pd, std::move(Sd), cd, cfg);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

MonthWeights build_month_weights_blocks(MonthId month, const Vec& pred,
                                        const std::array<Mat, 10>& Sigma_blocks, const Vec& caps,
                                        const PortfolioConfig& cfg) {
  if (caps.size() != pred.size())
    throw std::invalid_argument("build_month_weights_blocks: dimension mismatch");
  MonthWeights out;
  out.month = month;
  init_deciles(out, pred);

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int d = 0; d < 10; ++d) {
    try {
      const auto& mem = out.members[static_cast<size_t>(d)];
      const auto nd = static_cast<Eigen::Index>(mem.size());
      if (nd == 0) continue;
      const Mat& Sd = Sigma_blocks[static_cast<size_t>(d)];
      if (Sd.rows() != nd || Sd.cols() != nd)
        throw std::invalid_argument("build_month_weights_blocks: block size mismatch");
      Vec pd(nd), cd(nd);
      for (Eigen::Index i = 0; i < nd; ++i) {
        pd(i) = pred(mem[static_cast<size_t>(i)]);
        cd(i) = caps(mem[static_cast<size_t>(i)]);
      }
      solve_decile(out, d, pd, Sd, cd, cfg);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

StrategyStats evaluate_series(const std::vector<double>& monthly) {
  const auto n = static_cast<Eigen::Index>(monthly.size());
  if (n < 2) throw UndefinedMetricError("evaluate_series: need at least two months");
  double mean = 0.0;
  for (double r : monthly) mean += r;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : monthly) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) throw UndefinedMetricError("evaluate_series: zero-variance return series");
  StrategyStats s;
  s.ann_mean = 12.0 * mean;
  s.ann_sd = std::sqrt(12.0) * sd;
  s.sharpe = s.ann_mean / s.ann_sd;
  return s;
}

std::vector<double> cumulative_log(const std::vector<double>& monthly) {
  std::vector<double> out;
  out.reserve(monthly.size());
  double acc = 0.0;
  for (double r : monthly) {
    if (r <= -1.0)
      throw UndefinedMetricError("cumulative_log: gross return <= 0 has no log");
    acc += std::log1p(r);
    out.push_back(acc);
  }
  return out;
}

}  // namespace gpens
