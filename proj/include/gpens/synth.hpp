#pragma once

#include <map>
#include <vector>

#include "gpens/kernel.hpp"
#include "gpens/panel.hpp"

namespace gpens {

/// Settings for the synthetic panel generator. The conditional mean surface is
/// a draw from a GP with `gen_kernel`, represented through a fixed set of
/// landmark feature vectors, and evaluated on the exact features the ingestion
/// pipeline produces — so a correctly specified model can recover it.
struct SynthConfig {
  int n_months = 60;   // raw calendar months (slices start 7 months in)
  int n_assets = 100;  // cross-section size at the first month
  int n_assets_end = -1;  // cross-section size at the last month (-1: constant)
  int n_chars = 4;
  int n_macro = 2;
  double frac_quarterly = 0.25;  // share of characteristics on a quarterly cycle
  double frac_annual = 0.25;     // share on an annual cycle (rest monthly)
  double missing_prob = 0.02;    // chance a released characteristic value is missing
  double char_persistence = 0.9; // AR(1) coefficient of raw characteristics
  // sigma ~ 0.05 puts the conditional means on a monthly-log-return scale
  KernelParams gen_kernel{0.05, 0.3, 8.0, 0.0};
  std::vector<MonthId> regime_starts;  // months where f is redrawn (abrupt shifts)
  double target_r2 = 0.05;  // pooled R^2 of the true means; sets the noise level
  double noise_sd = -1.0;   // >= 0 overrides target_r2 with an explicit noise SD
  int n_landmarks = 256;
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

struct SynthOutput {
  RawPanel panel;
  // Ground truth per slice month, aligned with that slice's cross-section.
  std::map<MonthId, Vec> true_means;
  double noise_var = 0.0;
  double mean_sq_signal = 0.0;  // E[mu^2] over the panel
  double r2_ceiling = 0.0;      // mean_sq_signal / (mean_sq_signal + noise_var)
};

/// Deterministic in `config.seed`: same config, same panel, byte for byte.
SynthOutput synthesize(const SynthConfig& config);

}  // namespace gpens
