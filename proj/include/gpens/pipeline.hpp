#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gpens/portfolio.hpp"
#include "gpens/scheduler.hpp"
#include "gpens/synth.hpp"

namespace gpens {

/// Everything a run needs, resolved. The JSON form (config_from_json /
/// config_to_json) mirrors this struct field for field; unknown keys are
/// configuration errors.
struct RunConfig {
  fs::path data_dir;
  fs::path output_dir;
  uint64_t seed = 1;
  bool save_models = true;
  SplitConfig split;
  KernelParams kernel_init{1.0, 0.5, 1.0, 1e-10};
  OptConfig opt;
  PortfolioConfig portfolio;
  SweepRequest sweep;
  SynthConfig synth;
};

RunConfig config_from_json(const std::string& json_text);
std::string config_to_json(const RunConfig& cfg);  // deterministic resolved echo

struct RunSummary {
  double r2_pool = 0.0;
  double r2_avg = 0.0;
  double ic = 0.0;
  std::optional<double> ic_tstat;
  int n_test_months = 0;
  int fits = 0, loads = 0, hits = 0;
};

/// The full out-of-sample loop: fit/load the month chain, predict each test
/// month, and write predictions/, weights/, decile_cov/, metrics/, portfolio/,
/// models/ (when save_models), manifest.json and timings.csv under
/// cfg.output_dir. Everything except timings.csv is a pure function of config,
/// data and seed; rerunning or resuming reproduces those bytes exactly.
RunSummary run_pipeline(const RunConfig& cfg);

/// Score window lengths and schemes over the validation span; writes
/// sweep.csv under cfg.output_dir (models shared with run outputs when
/// save_models is on).
std::vector<SweepRow> sweep_pipeline(const RunConfig& cfg);

/// Generate a synthetic panel into `out_dir` (the four data files plus
/// truth.csv and synth_meta.json).
SynthOutput synth_pipeline(const SynthConfig& scfg, const fs::path& out_dir);

/// Rebuild metrics/ (or portfolio/) of a finished run from its stored
/// predictions and the panel, byte for byte. `data_dir` overrides the one
/// recorded in the run's manifest when non-empty.
RunSummary metrics_from_outputs(const fs::path& run_dir, const fs::path& data_dir = {});
void portfolio_from_outputs(const fs::path& run_dir, const fs::path& data_dir = {});

}  // namespace gpens
