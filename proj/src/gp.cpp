#include "gpens/gp.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <vector>

namespace gpens {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kJitterCeiling = 1e-4;

// Non-throwing factorization with jitter escalation. Returns the lower factor
// and the diagonal addition used, or nullopt if the ceiling is reached.
std::optional<std::pair<Mat, double>> try_factorize(const KernelParams& params, const Mat& X) {
  Mat K = kernel_matrix_sym(params, X);
  if (!K.allFinite()) return std::nullopt;
  double jitter = params.noise_var;
  while (true) {
    Mat Ky = K;
    Ky.diagonal().array() += jitter;
    Eigen::LLT<Mat> llt(Ky);
    if (llt.info() == Eigen::Success) {
      return std::make_pair(Mat(llt.matrixL()), jitter);
    }
    if (jitter >= kJitterCeiling) return std::nullopt;
    jitter = std::min(std::max(jitter, 1e-10) * 10.0, kJitterCeiling);
  }
}

struct MllParts {
  double mll;
  Mat L;
  Vec alpha;
  double jitter;
};

std::optional<MllParts> try_mll(const KernelParams& params, const Mat& X, const Vec& y) {
  auto fac = try_factorize(params, X);
  if (!fac) return std::nullopt;
  auto& [L, jitter] = *fac;
  // alpha = (K + jitter I)^-1 y via two triangular solves
  Vec alpha = L.triangularView<Eigen::Lower>().solve(y);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  const double quad = y.dot(alpha);
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double mll =
      -0.5 * static_cast<double>(y.size()) * kLog2Pi - 0.5 * quad - 0.5 * logdet;
  if (!std::isfinite(mll)) return std::nullopt;
  return MllParts{mll, std::move(L), std::move(alpha), jitter};
}

// Objective evaluations in unconstrained coordinates; gradient per Appendix-style
// trace identity, chain-ruled through the reparameterization.
class Objective {
 public:
  Objective(const Mat& X, const Vec& y, double noise_var)
      : X_(X), y_(y), noise_var_(noise_var) {}

  std::optional<double> value(const RawParams& raw) const {
    KernelParams p = from_raw(raw, noise_var_);
    if (!param_ok(p)) return std::nullopt;
    auto parts = try_mll(p, X_, y_);
    if (!parts) return std::nullopt;
    return parts->mll;
  }

  std::optional<std::pair<double, Vec>> value_and_grad(const RawParams& raw) const {
    KernelParams p = from_raw(raw, noise_var_);
    if (!param_ok(p)) return std::nullopt;
    auto parts = try_mll(p, X_, y_);
    if (!parts) return std::nullopt;
    const Eigen::Index n = X_.rows();
    // Kinv = L^-T L^-1
    Mat Kinv = Mat::Identity(n, n);
    parts->L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
    parts->L.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
    const auto dK = kernel_grad(p, X_);
    const auto jac = raw_jacobian(p);
    Vec g(kNumHypers);
    for (int j = 0; j < kNumHypers; ++j) {
      // 0.5 tr((alpha alpha^T - Kinv) dK_j), with tr(alpha alpha^T dK) = alpha^T dK alpha
      const double quad_term = parts->alpha.dot(dK[static_cast<size_t>(j)] * parts->alpha);
      const double trace_term = Kinv.cwiseProduct(dK[static_cast<size_t>(j)]).sum();
      g(j) = 0.5 * (quad_term - trace_term) * jac[static_cast<size_t>(j)];
    }
    if (!g.allFinite()) return std::nullopt;
    return std::make_pair(parts->mll, std::move(g));
  }

 private:
  static bool param_ok(const KernelParams& p) {
    return std::isfinite(p.sigma) && std::isfinite(p.alpha) && std::isfinite(p.beta) &&
           p.sigma > 0.0 && p.beta > 0.0 && p.alpha >= 0.0;
  }

  const Mat& X_;
  const Vec& y_;
  double noise_var_;
};

struct StartResult {
  bool ok = false;
  double mll = -std::numeric_limits<double>::infinity();
  RawParams raw;
  int iterations = 0;
};

// L-BFGS ascent (implemented as descent on -mll) with Armijo backtracking.
// A start is abandoned when the initial point fails to factorize; a failed or
// non-finite line-search step only shortens the step.
StartResult lbfgs_maximize(const Objective& obj, RawParams x0, const OptConfig& opt) {
  StartResult res;
  auto fg0 = obj.value_and_grad(x0);
  if (!fg0) return res;

  Eigen::Vector3d x(x0[0], x0[1], x0[2]);
  double f = -fg0->first;
  Eigen::Vector3d g = -fg0->second;

  std::deque<Eigen::Vector3d> s_hist, y_hist;
  std::deque<double> rho_hist;

  int iter = 0;
  for (; iter < opt.max_iters; ++iter) {
    if (g.norm() < opt.grad_tol) break;

    // Two-loop recursion for the search direction.
    Eigen::Vector3d q = g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      const auto ui = static_cast<size_t>(i);
      a[ui] = rho_hist[ui] * s_hist[ui].dot(q);
      q -= a[ui] * y_hist[ui];
    }
    if (!s_hist.empty()) {
      const auto& s = s_hist.back();
      const auto& yv = y_hist.back();
      q *= s.dot(yv) / yv.dot(yv);
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    Eigen::Vector3d dir = -q;
    if (dir.dot(g) >= 0.0) dir = -g;  // not a descent direction; reset

    const double slope = g.dot(dir);
    double step = s_hist.empty() ? 1.0 / std::max(1.0, g.norm()) : 1.0;
    bool accepted = false;
    Eigen::Vector3d x_new;
    double f_new = 0.0;
    Eigen::Vector3d g_new;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = x + step * dir;
      RawParams rp;
      rp[0] = x_new(0);
      rp[1] = x_new(1);
      rp[2] = x_new(2);
      auto fg = obj.value_and_grad(rp);
      if (fg && -fg->first <= f + 1e-4 * step * slope) {
        f_new = -fg->first;
        g_new = -fg->second;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search exhausted; keep the best point found

    const Eigen::Vector3d s = x_new - x;
    const Eigen::Vector3d yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.lbfgs_memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }

  res.ok = true;
  res.mll = -f;
  res.raw[0] = x(0);
  res.raw[1] = x(1);
  res.raw[2] = x(2);
  res.iterations = iter;
  return res;
}

}  // namespace

void TrainingSet::validate() const {
  if (features.rows() < 1) throw std::invalid_argument("TrainingSet: need at least one row");
  if (targets.size() != features.rows())
    throw std::invalid_argument("TrainingSet: targets length must equal feature row count");
  if (!features.allFinite() || !targets.allFinite())
    throw std::invalid_argument("TrainingSet: non-finite entries");
}

uint64_t TrainingSet::checksum() const {
  uint64_t h = fnv1a(&month_id, sizeof(month_id));
  const Eigen::Index dims[2] = {features.rows(), features.cols()};
  h = fnv1a(dims, sizeof(dims), h);
  h = fnv1a(features, h);
  h = fnv1a(targets, h);
  return h;
}

uint64_t OptConfig::config_hash() const {
  const double fields[] = {static_cast<double>(max_iters), grad_tol,
                           static_cast<double>(restarts),  sigma_lo,
                           sigma_hi,                       beta_lo,
                           beta_hi,                        alpha_lo,
                           alpha_hi,                       static_cast<double>(lbfgs_memory)};
  return fnv1a(fields, sizeof(fields));
}

std::pair<Mat, double> factorize_kernel(const KernelParams& params, const Mat& X,
                                        MonthId month_id) {
  auto fac = try_factorize(params, X);
  if (!fac) {
    const Mat K = kernel_matrix_sym(params, X);
    throw NumericalError("factorization failed after jitter escalation to 1e-4", month_id,
                         K.allFinite() ? K.diagonal().maxCoeff()
                                       : std::numeric_limits<double>::quiet_NaN());
  }
  return *fac;
}

double marginal_log_likelihood(const KernelParams& params, const TrainingSet& train) {
  params.validate();
  train.validate();
  auto parts = try_mll(params, train.features, train.targets);
  if (!parts)
    throw NumericalError("marginal_log_likelihood: factorization failed after jitter escalation",
                         train.month_id, 0.0);
  return parts->mll;
}

Vec mll_gradient(const KernelParams& params, const TrainingSet& train) {
  params.validate();
  train.validate();
  Objective obj(train.features, train.targets, params.noise_var);
  auto fg = obj.value_and_grad(to_raw(params));
  if (!fg)
    throw NumericalError("mll_gradient: factorization failed after jitter escalation",
                         train.month_id, 0.0);
  return fg->second;
}

FittedGP refit_at(const KernelParams& params, const TrainingSet& train) {
  params.validate();
  train.validate();
  auto [L, jitter] = factorize_kernel(params, train.features, train.month_id);
  Vec alpha = L.triangularView<Eigen::Lower>().solve(train.targets);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  const double quad = train.targets.dot(alpha);
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  FittedGP model;
  model.params = params;
  model.train = train;
  model.mll =
      -0.5 * static_cast<double>(train.targets.size()) * kLog2Pi - 0.5 * quad - 0.5 * logdet;
  model.chol = std::move(L);
  model.alpha_vec = std::move(alpha);
  model.jitter = jitter;
  return model;
}

FittedGP fit(const TrainingSet& train, const KernelParams& init, const OptConfig& opt,
             uint64_t seed, FitInfo* info) {
  const auto t0 = std::chrono::steady_clock::now();
  init.validate();
  train.validate();
  Objective obj(train.features, train.targets, init.noise_var);

  const int n_starts = 1 + std::max(0, opt.restarts);
  std::vector<RawParams> starts(static_cast<size_t>(n_starts));
  starts[0] = to_raw(init);
  for (int r = 1; r < n_starts; ++r) {
    Rng rng = month_stream(seed, train.month_id, /*purpose=*/0xf17, static_cast<uint64_t>(r));
    KernelParams p;
    p.sigma = rng.log_uniform(opt.sigma_lo, opt.sigma_hi);
    p.beta = rng.log_uniform(opt.beta_lo, opt.beta_hi);
    p.alpha = rng.uniform(opt.alpha_lo, opt.alpha_hi);
    p.noise_var = init.noise_var;
    starts[static_cast<size_t>(r)] = to_raw(p);
  }

  std::vector<StartResult> results(static_cast<size_t>(n_starts));
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < n_starts; ++r) {
    results[static_cast<size_t>(r)] = lbfgs_maximize(obj, starts[static_cast<size_t>(r)], opt);
  }

  int best = -1;
  int abandoned = 0;
  for (int r = 0; r < n_starts; ++r) {
    const auto& sr = results[static_cast<size_t>(r)];
    if (!sr.ok) {
      ++abandoned;
      continue;
    }
    if (best < 0 || sr.mll > results[static_cast<size_t>(best)].mll) best = r;
  }
  if (best < 0)
    throw NumericalError("fit: every start failed factorization", train.month_id, 0.0);

  FittedGP model = refit_at(from_raw(results[static_cast<size_t>(best)].raw, init.noise_var), train);
  if (info) {
    info->iterations = results[static_cast<size_t>(best)].iterations;
    info->starts_abandoned = abandoned;
    info->jitter = model.jitter;
    info->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return model;
}

GPPrediction predict(const FittedGP& model, const Mat& X_test) {
  if (X_test.cols() != model.train.features.cols())
    throw std::invalid_argument("predict: test feature dimension must match training");
  const Mat K_xs = kernel_matrix(model.params, model.train.features, X_test);
  GPPrediction out;
  out.mean = K_xs.transpose() * model.alpha_vec;
  Mat V = model.chol.triangularView<Eigen::Lower>().solve(K_xs);
  Mat cov = kernel_matrix_sym(model.params, X_test) - V.transpose() * V;
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

Vec predict_mean(const FittedGP& model, const Mat& X_test) {
  if (X_test.cols() != model.train.features.cols())
    throw std::invalid_argument("predict_mean: test feature dimension must match training");
  return kernel_matrix(model.params, model.train.features, X_test).transpose() * model.alpha_vec;
}

Vec predict_var(const FittedGP& model, const Mat& X_test) {
  if (X_test.cols() != model.train.features.cols())
    throw std::invalid_argument("predict_var: test feature dimension must match training");
  const Mat K_xs = kernel_matrix(model.params, model.train.features, X_test);
  const Mat V = model.chol.triangularView<Eigen::Lower>().solve(K_xs);
  Vec var(X_test.rows());
  for (Eigen::Index i = 0; i < X_test.rows(); ++i) {
    const Vec xi = X_test.row(i);
    var(i) = kernel_eval(model.params, xi, xi) - V.col(i).squaredNorm();
  }
  return var;
}

}  // namespace gpens
