#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "gpens/ensemble.hpp"
#include "gpens/gp.hpp"
#include "gpens/io.hpp"
#include "gpens/panel.hpp"

namespace gpens {

enum class Scheme { Rolling, Recursive };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& s);

/// Train/validation/test layout over slice months. Under Rolling the ensemble
/// for test month T spans {T-K, ..., T-1}; under Recursive it spans
/// {train_start, ..., T-1}. frozen_window pins the Rolling window at the one
/// belonging to test_start for every later test month.
struct SplitConfig {
  Scheme scheme = Scheme::Rolling;
  int K = 24;
  WeightScheme weight_scheme = WeightScheme::MSE;
  MonthId train_start = 0;
  MonthId validation_start = 0;  // first month scored by the window sweep
  MonthId test_start = 0;
  MonthId test_end = 0;
  bool frozen_window = false;

  void validate() const;
  /// Model months feeding the prediction for test month T, ascending. Under
  /// the MSE scheme the last entry doubles as the calibration month.
  std::vector<MonthId> window_for(MonthId T) const;
};

/// Per-month single-GP store with warm-started sequential fitting: the fit at
/// month m starts from the fitted parameters of month m-1 (the anchor month
/// starts from `init`). Optionally persists models to disk and reloads them
/// when seed, optimizer hash, and training-set checksum all match, so a
/// resumed run reproduces a fresh one bitwise.
class ModelCache {
 public:
  ModelCache(PanelSource& panel, KernelParams init, OptConfig opt, uint64_t seed,
             MonthId chain_start, fs::path dir = {});

  /// Fitted GP for month m (fitting every unfitted chain month <= m first).
  /// Requires the panel clock to already admit reading returns of month m.
  std::shared_ptr<const FittedGP> get(MonthId m);

  /// Drop factorizations outside [lo, hi]; fitted parameters are kept so the
  /// warm-start chain and cache identity survive eviction.
  void retain_window(MonthId lo, MonthId hi);

  int fit_count() const { return fits_; }
  int load_count() const { return loads_; }
  int hit_count() const { return hits_; }

  const std::map<MonthId, ModelRecord>& records() const { return records_; }
  /// Wall-clock seconds per fresh fit this process (loads and hits absent).
  const std::vector<std::pair<MonthId, double>>& fit_seconds() const { return fit_seconds_; }

 private:
  std::shared_ptr<const FittedGP> build(MonthId m, const KernelParams& init_params);
  TrainingSet training_set(MonthId m) const;

  PanelSource& panel_;
  KernelParams init_;
  OptConfig opt_;
  uint64_t seed_;
  MonthId chain_start_;
  fs::path dir_;

  std::map<MonthId, std::shared_ptr<const FittedGP>> live_;
  std::map<MonthId, KernelParams> fitted_params_;  // full chain, never evicted
  std::map<MonthId, ModelRecord> records_;
  std::vector<std::pair<MonthId, double>> fit_seconds_;
  int fits_ = 0, loads_ = 0, hits_ = 0;
};

/// One test month of output from the online loop.
struct StepOutput {
  MonthId test_month = -1;
  std::vector<std::string> asset_names;  // slice order of the test month
  MixturePrediction pred;
};

/// Walks the test span month by month: advance the clock to T-1, fit or load
/// the window's models, form mixing weights (MSE calibrates on T-1), and mix
/// on the features of T. Reading realized returns of T is the caller's move,
/// after it advances the clock past T.
class OnlineRunner {
 public:
  OnlineRunner(PanelSource& panel, ModelCache& cache, const SplitConfig& split,
               bool diag_cov = false);

  bool done() const { return next_ > split_.test_end; }
  MonthId next_test_month() const { return next_; }
  StepOutput step();

 private:
  PanelSource& panel_;
  ModelCache& cache_;
  SplitConfig split_;
  bool diag_cov_;
  MonthId next_;
};

/// A window's fitted models plus their mixing weights, ready for mix().
/// Under MSE the calibration month window.back() carries weight 0 and no
/// model entry. `mse_memo` (optional) caches (model month, calibration month)
/// -> MSE across sweep configurations that share months.
struct WindowEnsemble {
  std::vector<MonthId> window;
  MixingWeights weights;
  ModelMap models;
  std::vector<std::shared_ptr<const FittedGP>> owned;  // keep-alive for `models`
};

WindowEnsemble assemble_window(PanelSource& panel, ModelCache& cache,
                               const std::vector<MonthId>& window, WeightScheme scheme,
                               std::map<std::pair<MonthId, MonthId>, double>* mse_memo = nullptr);

/// One evaluated configuration of the window sweep.
struct SweepRow {
  Scheme scheme = Scheme::Rolling;
  int K = 0;  // 0 under Recursive
  WeightScheme weight_scheme = WeightScheme::MSE;
  double r2_pool = 0.0;
  double r2_avg = 0.0;
  double ic = 0.0;
  std::optional<double> ic_tstat;
  int n_months = 0;
};

struct SweepRequest {
  std::vector<int> Ks;             // Rolling window lengths to score
  bool include_recursive = false;  // additionally score the Recursive scheme
  std::vector<WeightScheme> weight_schemes = {WeightScheme::Equal, WeightScheme::MSE};
};

/// Score every requested configuration over [validation_start, test_start-1]
/// using mean predictions only. Models are shared across configurations via
/// the cache and calibration MSEs via a memo, so each (month, calibration)
/// pair is priced once.
std::vector<SweepRow> sweep(PanelSource& panel, ModelCache& cache, const SplitConfig& base,
                            const SweepRequest& req);

}  // namespace gpens
