#include "gpens/scheduler.hpp"

#include <algorithm>
#include <cstdio>

#include "gpens/metrics.hpp"

namespace gpens {

const char* scheme_name(Scheme s) {
  return s == Scheme::Rolling ? "rolling" : "recursive";
}

Scheme parse_scheme(const std::string& s) {
  if (s == "rolling") return Scheme::Rolling;
  if (s == "recursive") return Scheme::Recursive;
  throw ConfigError("unknown scheme '" + s + "' (expected rolling|recursive)");
}

void SplitConfig::validate() const {
  if (!(train_start < validation_start))
    throw ConfigError("split: train_start must precede validation_start");
  if (!(validation_start < test_start))
    throw ConfigError("split: validation_start must precede test_start");
  if (!(test_start <= test_end)) throw ConfigError("split: empty test span");
  if (scheme == Scheme::Rolling) {
    if (K < 2) throw ConfigError("split: rolling window length K must be >= 2");
    // The earliest window the sweep or run can ask for starts at
    // validation_start - K and must not reach before the chain anchor.
    if (validation_start - K < train_start)
      throw ConfigError("split: rolling window reaches before train_start at validation_start");
  } else {
    const MonthId need = weight_scheme == WeightScheme::MSE ? 2 : 1;
    if (validation_start - train_start < need)
      throw ConfigError("split: recursive window too short at validation_start");
  }
}

std::vector<MonthId> SplitConfig::window_for(MonthId T) const {
  MonthId lo, hi;
  if (scheme == Scheme::Rolling) {
    const MonthId anchor = frozen_window ? test_start : T;
    lo = anchor - K;
    hi = anchor - 1;
  } else {
    lo = train_start;
    hi = T - 1;
  }
  if (lo < train_start || hi < lo)
    throw ConfigError("split: window for month " + std::to_string(T) + " is infeasible");
  std::vector<MonthId> w;
  w.reserve(static_cast<size_t>(hi - lo + 1));
  for (MonthId m = lo; m <= hi; ++m) w.push_back(m);
  return w;
}

namespace {

std::string model_file(MonthId m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "month_%04d.model", m);
  return buf;
}

}  // namespace

ModelCache::ModelCache(PanelSource& panel, KernelParams init, OptConfig opt, uint64_t seed,
                       MonthId chain_start, fs::path dir)
    : panel_(panel),
      init_(init),
      opt_(opt),
      seed_(seed),
      chain_start_(chain_start),
      dir_(std::move(dir)) {
  init_.validate();
  if (chain_start_ < panel_.first_slice() || chain_start_ > panel_.last_slice())
    throw ConfigError("model cache: chain start " + std::to_string(chain_start_) +
                      " outside the panel's slice range");
}

TrainingSet ModelCache::training_set(MonthId m) const {
  TrainingSet ts;
  ts.features = panel_.features(m);
  ts.targets = panel_.log_returns(m);
  ts.month_id = m;
  ts.validate();
  return ts;
}

std::shared_ptr<const FittedGP> ModelCache::build(MonthId m, const KernelParams& init_params) {
  const TrainingSet ts = training_set(m);

  if (!dir_.empty()) {
    if (auto rec = load_model(dir_ / model_file(m));
        rec && rec->month == m && rec->seed == seed_ && rec->opt_hash == opt_.config_hash() &&
        rec->train_n == ts.features.rows() && rec->train_d == ts.features.cols() &&
        rec->train_checksum == ts.checksum()) {
      auto model = std::make_shared<FittedGP>(refit_at(rec->params, ts));
      ++loads_;
      fitted_params_[m] = rec->params;
      records_[m] = *rec;
      live_[m] = model;
      return model;
    }
  }

  FitInfo info;
  auto model = std::make_shared<FittedGP>(fit(ts, init_params, opt_, seed_, &info));
  ++fits_;
  fit_seconds_.emplace_back(m, info.seconds);

  ModelRecord rec;
  rec.month = m;
  rec.seed = seed_;
  rec.opt_hash = opt_.config_hash();
  rec.train_n = ts.features.rows();
  rec.train_d = ts.features.cols();
  rec.train_checksum = ts.checksum();
  rec.params = model->params;
  rec.mll = model->mll;
  rec.jitter = info.jitter;
  rec.iterations = info.iterations;
  rec.starts_abandoned = info.starts_abandoned;
  records_[m] = rec;
  fitted_params_[m] = model->params;
  if (!dir_.empty()) save_model(dir_ / model_file(m), rec);

  live_[m] = model;
  return model;
}

std::shared_ptr<const FittedGP> ModelCache::get(MonthId m) {
  if (m < chain_start_)
    throw ConfigError("model cache: month " + std::to_string(m) + " precedes the chain anchor");

  if (auto it = live_.find(m); it != live_.end()) {
    ++hits_;
    return it->second;
  }

  // Extend the warm-start chain: fitted_params_ always covers the contiguous
  // range [chain_start_, hi], each month initialized from its predecessor.
  MonthId hi = fitted_params_.empty() ? chain_start_ - 1 : fitted_params_.rbegin()->first;
  for (MonthId j = hi + 1; j <= m; ++j)
    build(j, j == chain_start_ ? init_ : fitted_params_.at(j - 1));

  if (auto it = live_.find(m); it != live_.end()) return it->second;

  // Fitted earlier but evicted: the parameters are still exact, so one
  // factorization restores the identical model.
  auto model = std::make_shared<const FittedGP>(refit_at(fitted_params_.at(m), training_set(m)));
  ++hits_;
  live_[m] = model;
  return model;
}

void ModelCache::retain_window(MonthId lo, MonthId hi) {
  for (auto it = live_.begin(); it != live_.end();) {
    if (it->first < lo || it->first > hi)
      it = live_.erase(it);
    else
      ++it;
  }
}

WindowEnsemble assemble_window(PanelSource& panel, ModelCache& cache,
                               const std::vector<MonthId>& window, WeightScheme scheme,
                               std::map<std::pair<MonthId, MonthId>, double>* mse_memo) {
  if (window.empty()) throw ConfigError("assemble_window: empty window");
  WindowEnsemble out;
  out.window = window;

  const bool mse = scheme == WeightScheme::MSE;
  if (mse && window.size() < 2)
    throw ConfigError("assemble_window: MSE weighting needs a model month plus a calibration month");

  const size_t n_models = window.size() - (mse ? 1 : 0);
  for (size_t i = 0; i < n_models; ++i) {
    auto model = cache.get(window[i]);
    out.models.emplace(window[i], model.get());
    out.owned.push_back(std::move(model));
  }

  if (!mse) {
    out.weights = equal_weights(window);
    return out;
  }

  const MonthId calib = window.back();
  const Mat& X_calib = panel.features(calib);
  const Vec& r_calib = panel.log_returns(calib);
  std::map<MonthId, double> mses;
  for (const auto& [m, model] : out.models) {
    if (mse_memo) {
      auto key = std::make_pair(m, calib);
      auto it = mse_memo->find(key);
      if (it == mse_memo->end())
        it = mse_memo->emplace(key, calibration_mse(*model, X_calib, r_calib)).first;
      mses.emplace(m, it->second);
    } else {
      mses.emplace(m, calibration_mse(*model, X_calib, r_calib));
    }
  }
  out.weights = weights_from_mse(mses, calib);
  return out;
}

OnlineRunner::OnlineRunner(PanelSource& panel, ModelCache& cache, const SplitConfig& split,
                           bool diag_cov)
    : panel_(panel), cache_(cache), split_(split), diag_cov_(diag_cov), next_(split.test_start) {
  split_.validate();
  if (split_.train_start < panel_.first_slice())
    throw ConfigError("split: train_start precedes the first panel slice (" +
                      std::to_string(panel_.first_slice()) + ")");
  if (split_.test_end > panel_.last_slice())
    throw ConfigError("split: test_end exceeds the last panel slice (" +
                      std::to_string(panel_.last_slice()) + ")");
}

StepOutput OnlineRunner::step() {
  if (done()) throw std::logic_error("OnlineRunner::step past test_end");
  const MonthId T = next_;
  panel_.set_clock(T - 1);

  const auto window = split_.window_for(T);
  auto ens = assemble_window(panel_, cache_, window, split_.weight_scheme);

  StepOutput out;
  out.test_month = T;
  out.asset_names = panel_.asset_names(T);
  out.pred = mix(ens.models, ens.weights, panel_.features(T), diag_cov_);

  if (split_.scheme == Scheme::Rolling) cache_.retain_window(window.front(), window.back());
  ++next_;
  return out;
}

std::vector<SweepRow> sweep(PanelSource& panel, ModelCache& cache, const SplitConfig& base,
                            const SweepRequest& req) {
  // Only the span ordering matters here; scheme, K and weight scheme are
  // overridden per configuration and validated there.
  if (!(base.train_start < base.validation_start) ||
      !(base.validation_start < base.test_start) || !(base.test_start <= base.test_end))
    throw ConfigError("sweep: need train_start < validation_start < test_start <= test_end");
  if (req.weight_schemes.empty()) throw ConfigError("sweep: no weight schemes requested");
  if (req.Ks.empty() && !req.include_recursive)
    throw ConfigError("sweep: no configurations requested");
  const MonthId V0 = base.validation_start;
  const MonthId V1 = base.test_start - 1;

  std::vector<SplitConfig> configs;
  for (int K : req.Ks) {
    for (WeightScheme ws : req.weight_schemes) {
      SplitConfig cfg = base;
      cfg.scheme = Scheme::Rolling;
      cfg.K = K;
      cfg.weight_scheme = ws;
      cfg.frozen_window = false;  // anchoring at test_start would peek forward here
      cfg.validate();
      configs.push_back(cfg);
    }
  }
  if (req.include_recursive) {
    for (WeightScheme ws : req.weight_schemes) {
      SplitConfig cfg = base;
      cfg.scheme = Scheme::Recursive;
      cfg.weight_scheme = ws;
      cfg.frozen_window = false;
      cfg.validate();
      configs.push_back(cfg);
    }
  }

  std::map<std::pair<MonthId, MonthId>, double> memo;
  std::vector<SweepRow> rows;
  rows.reserve(configs.size());
  for (const SplitConfig& cfg : configs) {
    std::vector<PanelObs> obs;
    for (MonthId T = V0; T <= V1; ++T) {
      panel.set_clock(T - 1);
      auto ens = assemble_window(panel, cache, cfg.window_for(T), cfg.weight_scheme, &memo);
      Vec mean = mix_mean(ens.models, ens.weights, panel.features(T));
      panel.set_clock(T);
      obs.push_back({T, std::move(mean), panel.log_returns(T)});
    }
    SweepRow row;
    row.scheme = cfg.scheme;
    row.K = cfg.scheme == Scheme::Rolling ? cfg.K : 0;
    row.weight_scheme = cfg.weight_scheme;
    row.r2_pool = r2_pool(obs);
    row.r2_avg = r2_avg(obs);
    const ICResult ic = information_coefficient(obs);
    row.ic = ic.ic;
    row.ic_tstat = ic.tstat;
    row.n_months = static_cast<int>(V1 - V0 + 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gpens
