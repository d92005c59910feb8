#include "gpens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gpens/gp.hpp"

namespace gpens {

namespace {
// Sub-stream tags; the layout of draws per stream is fixed by loop order.
constexpr uint64_t kStreamChars = 1;
constexpr uint64_t kStreamMissing = 2;
constexpr uint64_t kStreamMacro = 3;
constexpr uint64_t kStreamCaps = 4;
constexpr uint64_t kStreamRegime = 5;  // + regime index
constexpr uint64_t kStreamNoise = 6;
constexpr uint64_t kStreamFiller = 7;
}  // namespace

void SynthConfig::validate() const {
  if (n_months < 9) throw ConfigError("synth: n_months must be >= 9 (lags eat 7 months)");
  if (n_assets < 10) throw ConfigError("synth: n_assets must be >= 10");
  if (n_assets_end >= 0 && n_assets_end < n_assets)
    throw ConfigError("synth: n_assets_end must be >= n_assets (universe only grows)");
  if (n_chars < 1) throw ConfigError("synth: n_chars must be >= 1");
  if (n_macro < 0) throw ConfigError("synth: n_macro must be >= 0");
  if (frac_quarterly < 0 || frac_annual < 0 || frac_quarterly + frac_annual > 1.0)
    throw ConfigError("synth: characteristic frequency fractions must be in [0,1] and sum <= 1");
  if (missing_prob < 0 || missing_prob >= 1) throw ConfigError("synth: missing_prob in [0,1)");
  if (char_persistence < 0 || char_persistence >= 1)
    throw ConfigError("synth: char_persistence in [0,1)");
  try {
    gen_kernel.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("synth: bad generator kernel: ") + e.what());
  }
  if (!(target_r2 > 0 && target_r2 < 1)) throw ConfigError("synth: target_r2 in (0,1)");
  if (n_landmarks < 8) throw ConfigError("synth: n_landmarks must be >= 8");
  for (MonthId r : regime_starts)
    if (r < 0 || r >= n_months) throw ConfigError("synth: regime start outside the panel");
}

SynthOutput synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const int M = cfg.n_months, p = cfg.n_chars, q = cfg.n_macro;
  const int n_end = cfg.n_assets_end < 0 ? cfg.n_assets : cfg.n_assets_end;
  const int n_all = n_end;
  Rng master(cfg.seed);

  RawPanel panel;
  panel.first_month = 0;
  panel.n_chars = p;
  panel.n_macro = q;
  for (int a = 0; a < n_all; ++a) panel.asset_names.push_back("A" + std::to_string(a + 1));

  // Frequency layout: monthly block, then quarterly, then annual.
  const int n_q = static_cast<int>(std::lround(cfg.frac_quarterly * p));
  const int n_a = std::min(static_cast<int>(std::lround(cfg.frac_annual * p)), p - n_q);
  for (int k = 0; k < p; ++k) {
    if (k < p - n_q - n_a) panel.char_freq.push_back(Frequency::Monthly);
    else if (k < p - n_a) panel.char_freq.push_back(Frequency::Quarterly);
    else panel.char_freq.push_back(Frequency::Annual);
  }

  auto n_at = [&](int mi) {
    if (n_end == cfg.n_assets || M == 1) return cfg.n_assets;
    const double f = static_cast<double>(mi) / static_cast<double>(M - 1);
    return static_cast<int>(std::lround(cfg.n_assets + f * (n_end - cfg.n_assets)));
  };
  auto releases_at = [&](Frequency f, int mi) {
    switch (f) {
      case Frequency::Monthly: return true;
      case Frequency::Quarterly: return mi % 3 == 0;
      case Frequency::Annual: return mi % 12 == 0;
    }
    return false;
  };

  // Raw characteristics: AR(1) per (asset, characteristic) across its release
  // months; non-release months and dropped releases are NaN.
  std::vector<Mat> chars(static_cast<size_t>(M));
  for (int mi = 0; mi < M; ++mi)
    chars[static_cast<size_t>(mi)] =
        Mat::Constant(n_all, p, std::numeric_limits<double>::quiet_NaN());
  {
    Rng rc = master.derive(kStreamChars);
    Rng rm = master.derive(kStreamMissing);
    const double rho = cfg.char_persistence;
    const double innov = std::sqrt(1.0 - rho * rho);
    for (int k = 0; k < p; ++k) {
      for (int a = 0; a < n_all; ++a) {
        double x = rc.normal();
        for (int mi = 0; mi < M; ++mi) {
          if (!releases_at(panel.char_freq[static_cast<size_t>(k)], mi)) continue;
          if (mi > 0) x = rho * x + innov * rc.normal();
          const bool miss = rm.uniform() < cfg.missing_prob;
          if (!miss) chars[static_cast<size_t>(mi)](a, k) = x;
        }
      }
    }
  }

  // Macro series: standardized AR(1).
  Mat macro(M, std::max(q, 1));
  {
    Rng r = master.derive(kStreamMacro);
    const double rho = 0.9, innov = std::sqrt(1.0 - rho * rho);
    for (int l = 0; l < q; ++l) {
      double x = r.normal();
      for (int mi = 0; mi < M; ++mi) {
        if (mi > 0) x = rho * x + innov * r.normal();
        macro(mi, l) = x;
      }
    }
  }

  // Market caps: per-asset log-normal random walk.
  Mat caps(M, n_all);
  {
    Rng r = master.derive(kStreamCaps);
    for (int a = 0; a < n_all; ++a) {
      double lc = 1.5 * r.normal();
      for (int mi = 0; mi < M; ++mi) {
        if (mi > 0) lc += 0.05 * r.normal();
        caps(mi, a) = std::exp(lc);
      }
    }
  }

  // Assemble the panel with placeholder returns; features never read returns,
  // so the slices built here are the ones the final panel will produce.
  for (int mi = 0; mi < M; ++mi) {
    RawPanel::MonthData md;
    const int n = n_at(mi);
    for (int a = 0; a < n; ++a) md.assets.push_back(a);
    md.chars.resize(n, p);
    for (int i = 0; i < n; ++i) md.chars.row(i) = chars[static_cast<size_t>(mi)].row(i);
    md.log_ret = Vec::Zero(n);
    md.simple_ret = Vec::Zero(n);
    md.mcap.resize(n);
    for (int i = 0; i < n; ++i) md.mcap(i) = caps(mi, i);
    md.macro = macro.row(mi).head(q).transpose();
    panel.months.push_back(std::move(md));
  }
  const PanelStore store(panel);

  // Landmark representation of the conditional mean surface: rows spread
  // evenly across the panel's actual feature vectors.
  Eigen::Index total_rows = 0;
  for (MonthId m = store.first_slice(); m <= store.last_slice(); ++m)
    total_rows += store.slice(m).features.rows();
  const Eigen::Index L = std::min<Eigen::Index>(cfg.n_landmarks, total_rows);
  const Eigen::Index d = store.slice(store.first_slice()).features.cols();
  Mat Z(L, d);
  {
    std::vector<Eigen::Index> targets(static_cast<size_t>(L));
    for (Eigen::Index i = 0; i < L; ++i) targets[static_cast<size_t>(i)] = i * total_rows / L;
    Eigen::Index row = 0, next = 0;
    for (MonthId m = store.first_slice(); m <= store.last_slice() && next < L; ++m) {
      const Mat& X = store.slice(m).features;
      for (Eigen::Index i = 0; i < X.rows() && next < L; ++i, ++row)
        if (row == targets[static_cast<size_t>(next)]) Z.row(next++) = X.row(i);
    }
  }

  KernelParams gk = cfg.gen_kernel;
  gk.noise_var = 0.0;
  Mat K_LL = kernel_matrix_sym(gk, Z);
  double jitter = 1e-8;
  Eigen::LLT<Mat> llt;
  for (;;) {
    Mat Kj = K_LL;
    Kj.diagonal().array() += jitter;
    llt.compute(Kj);
    if (llt.info() == Eigen::Success) break;
    if (jitter >= 1e-2) throw NumericalError("synth: landmark kernel not factorizable", -1, jitter);
    jitter *= 10.0;
  }
  const Mat Lchol = llt.matrixL();

  // One weight vector per regime: w = L^-T g gives f(x) = k(x, Z) w with
  // Cov(f(x), f(x')) equal to the landmark (Nystrom) approximation of k.
  std::vector<MonthId> starts = cfg.regime_starts;
  std::sort(starts.begin(), starts.end());
  const int n_regimes = static_cast<int>(starts.size()) + 1;
  std::vector<Vec> w_regime;
  for (int r = 0; r < n_regimes; ++r) {
    Rng rr = master.derive(kStreamRegime).derive(static_cast<uint64_t>(r));
    Vec g(L);
    for (Eigen::Index i = 0; i < L; ++i) g(i) = rr.normal();
    Vec w = Lchol.triangularView<Eigen::Lower>().transpose().solve(g);
    w_regime.push_back(std::move(w));
  }
  auto regime_of = [&](MonthId m) {
    int r = 0;
    for (MonthId s : starts)
      if (m >= s) ++r;
    return r;
  };

  SynthOutput out;
  // Every regime surface is centered over the full panel's feature rows: a
  // raw draw carries a random constant offset that would otherwise spend the
  // r2 budget on a common drift instead of cross-sectional structure, and
  // centering over the full panel keeps months before a break independent of
  // where the break falls.
  std::vector<double> reg_sum(w_regime.size(), 0.0);
  Eigen::Index count = 0;
  for (MonthId m = store.first_slice(); m <= store.last_slice(); ++m) {
    const PanelSlice& s = store.slice(m);
    const Mat Km = kernel_matrix(gk, s.features, Z);
    const int own = regime_of(m);
    for (int r = 0; r < n_regimes; ++r) {
      Vec v = Km * w_regime[static_cast<size_t>(r)];
      reg_sum[static_cast<size_t>(r)] += v.sum();
      if (r == own) out.true_means.emplace(m, std::move(v));
    }
    count += static_cast<Eigen::Index>(s.assets.size());
  }
  double sq_sum = 0.0;
  for (auto& [m, mu] : out.true_means) {
    mu.array() -= reg_sum[static_cast<size_t>(regime_of(m))] / static_cast<double>(count);
    sq_sum += mu.squaredNorm();
  }
  out.mean_sq_signal = count > 0 ? sq_sum / static_cast<double>(count) : 0.0;
  out.noise_var = cfg.noise_sd >= 0.0 ? cfg.noise_sd * cfg.noise_sd
                                      : out.mean_sq_signal * (1.0 - cfg.target_r2) / cfg.target_r2;
  out.r2_ceiling = out.mean_sq_signal + out.noise_var > 0.0
                       ? out.mean_sq_signal / (out.mean_sq_signal + out.noise_var)
                       : 0.0;
  const double sd = std::sqrt(out.noise_var);
  const double filler_sd = std::sqrt(out.mean_sq_signal + out.noise_var);

  // Realized returns: truth plus noise on each slice's cross-section; assets
  // outside any slice (warm-up months, fresh entrants) get pure-noise filler.
  Rng rn = master.derive(kStreamNoise);
  Rng rf = master.derive(kStreamFiller);
  for (int mi = 0; mi < M; ++mi) {
    const MonthId m = panel.first_month + mi;
    auto& md = panel.months[static_cast<size_t>(mi)];
    const Vec* mu = nullptr;
    const std::vector<int>* su = nullptr;
    if (auto it = out.true_means.find(m); it != out.true_means.end()) {
      mu = &it->second;
      su = &store.slice(m).assets;
    }
    size_t k = 0;  // position within the slice universe
    for (size_t i = 0; i < md.assets.size(); ++i) {
      double r;
      if (su && k < su->size() && (*su)[k] == md.assets[i]) {
        r = (*mu)(static_cast<Eigen::Index>(k)) + sd * rn.normal();
        ++k;
      } else {
        r = filler_sd * rf.normal();
      }
      md.log_ret(static_cast<Eigen::Index>(i)) = r;
      md.simple_ret(static_cast<Eigen::Index>(i)) = std::expm1(r);
    }
  }
  out.panel = std::move(panel);
  return out;
}

}  // namespace gpens
