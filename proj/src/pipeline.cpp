#include "gpens/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "gpens/metrics.hpp"
#include "json.hpp"

namespace gpens {

using json = nlohmann::json;

namespace {

std::string month_csv(MonthId m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "month_%04d.csv", m);
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- config <-> json ------------------------------------------------------

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void get_to(const json& j, const char* where, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    it->get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

void get_path(const json& j, const char* where, const char* key, fs::path& out) {
  std::string s = out.string();
  get_to(j, where, key, s);
  out = s;
}

KernelParams kernel_from_json(const json& j, KernelParams base, const char* where) {
  check_keys(j, where, {"sigma", "alpha", "beta", "noise_var"});
  get_to(j, where, "sigma", base.sigma);
  get_to(j, where, "alpha", base.alpha);
  get_to(j, where, "beta", base.beta);
  get_to(j, where, "noise_var", base.noise_var);
  try {
    base.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string(where) + ": " + e.what());
  }
  return base;
}

json kernel_to_json(const KernelParams& p) {
  return {{"sigma", p.sigma}, {"alpha", p.alpha}, {"beta", p.beta}, {"noise_var", p.noise_var}};
}

SplitConfig split_from_json(const json& j, SplitConfig base) {
  check_keys(j, "split",
             {"scheme", "K", "weight_scheme", "train_start", "validation_start", "test_start",
              "test_end", "frozen_window"});
  std::string scheme = scheme_name(base.scheme);
  std::string ws = weight_scheme_name(base.weight_scheme);
  get_to(j, "split", "scheme", scheme);
  get_to(j, "split", "weight_scheme", ws);
  base.scheme = parse_scheme(scheme);
  base.weight_scheme = parse_weight_scheme(ws);
  get_to(j, "split", "K", base.K);
  get_to(j, "split", "train_start", base.train_start);
  get_to(j, "split", "validation_start", base.validation_start);
  get_to(j, "split", "test_start", base.test_start);
  get_to(j, "split", "test_end", base.test_end);
  get_to(j, "split", "frozen_window", base.frozen_window);
  return base;
}

json split_to_json(const SplitConfig& s) {
  return {{"scheme", scheme_name(s.scheme)},
          {"K", s.K},
          {"weight_scheme", weight_scheme_name(s.weight_scheme)},
          {"train_start", s.train_start},
          {"validation_start", s.validation_start},
          {"test_start", s.test_start},
          {"test_end", s.test_end},
          {"frozen_window", s.frozen_window}};
}

OptConfig opt_from_json(const json& j, OptConfig base) {
  check_keys(j, "optimizer",
             {"max_iters", "grad_tol", "restarts", "sigma_lo", "sigma_hi", "beta_lo", "beta_hi",
              "alpha_lo", "alpha_hi", "lbfgs_memory"});
  get_to(j, "optimizer", "max_iters", base.max_iters);
  get_to(j, "optimizer", "grad_tol", base.grad_tol);
  get_to(j, "optimizer", "restarts", base.restarts);
  get_to(j, "optimizer", "sigma_lo", base.sigma_lo);
  get_to(j, "optimizer", "sigma_hi", base.sigma_hi);
  get_to(j, "optimizer", "beta_lo", base.beta_lo);
  get_to(j, "optimizer", "beta_hi", base.beta_hi);
  get_to(j, "optimizer", "alpha_lo", base.alpha_lo);
  get_to(j, "optimizer", "alpha_hi", base.alpha_hi);
  get_to(j, "optimizer", "lbfgs_memory", base.lbfgs_memory);
  if (base.max_iters < 1 || base.restarts < 0 || base.lbfgs_memory < 1 ||
      !(base.grad_tol > 0.0) || !(base.sigma_lo > 0.0) || !(base.sigma_lo <= base.sigma_hi) ||
      !(base.beta_lo > 0.0) || !(base.beta_lo <= base.beta_hi) || !(base.alpha_lo >= 0.0) ||
      !(base.alpha_lo <= base.alpha_hi))
    throw ConfigError("optimizer: invalid settings");
  return base;
}

json opt_to_json(const OptConfig& o) {
  return {{"max_iters", o.max_iters},   {"grad_tol", o.grad_tol}, {"restarts", o.restarts},
          {"sigma_lo", o.sigma_lo},     {"sigma_hi", o.sigma_hi}, {"beta_lo", o.beta_lo},
          {"beta_hi", o.beta_hi},       {"alpha_lo", o.alpha_lo}, {"alpha_hi", o.alpha_hi},
          {"lbfgs_memory", o.lbfgs_memory}};
}

SweepRequest sweep_from_json(const json& j, SweepRequest base) {
  check_keys(j, "sweep", {"Ks", "include_recursive", "weight_schemes"});
  get_to(j, "sweep", "Ks", base.Ks);
  get_to(j, "sweep", "include_recursive", base.include_recursive);
  if (auto it = j.find("weight_schemes"); it != j.end()) {
    std::vector<std::string> names;
    get_to(j, "sweep", "weight_schemes", names);
    base.weight_schemes.clear();
    for (const auto& n : names) base.weight_schemes.push_back(parse_weight_scheme(n));
  }
  return base;
}

json sweep_to_json(const SweepRequest& r) {
  std::vector<std::string> names;
  for (WeightScheme s : r.weight_schemes) names.emplace_back(weight_scheme_name(s));
  return {{"Ks", r.Ks}, {"include_recursive", r.include_recursive}, {"weight_schemes", names}};
}

SynthConfig synth_from_json(const json& j, SynthConfig base) {
  check_keys(j, "synth",
             {"n_months", "n_assets", "n_assets_end", "n_chars", "n_macro", "frac_quarterly",
              "frac_annual", "missing_prob", "char_persistence", "gen_kernel", "regime_starts",
              "target_r2", "noise_sd", "n_landmarks", "seed"});
  get_to(j, "synth", "n_months", base.n_months);
  get_to(j, "synth", "n_assets", base.n_assets);
  get_to(j, "synth", "n_assets_end", base.n_assets_end);
  get_to(j, "synth", "n_chars", base.n_chars);
  get_to(j, "synth", "n_macro", base.n_macro);
  get_to(j, "synth", "frac_quarterly", base.frac_quarterly);
  get_to(j, "synth", "frac_annual", base.frac_annual);
  get_to(j, "synth", "missing_prob", base.missing_prob);
  get_to(j, "synth", "char_persistence", base.char_persistence);
  if (auto it = j.find("gen_kernel"); it != j.end())
    base.gen_kernel = kernel_from_json(*it, base.gen_kernel, "synth.gen_kernel");
  get_to(j, "synth", "regime_starts", base.regime_starts);
  get_to(j, "synth", "target_r2", base.target_r2);
  get_to(j, "synth", "noise_sd", base.noise_sd);
  get_to(j, "synth", "n_landmarks", base.n_landmarks);
  get_to(j, "synth", "seed", base.seed);
  return base;
}

json synth_to_json(const SynthConfig& s) {
  return {{"n_months", s.n_months},
          {"n_assets", s.n_assets},
          {"n_assets_end", s.n_assets_end},
          {"n_chars", s.n_chars},
          {"n_macro", s.n_macro},
          {"frac_quarterly", s.frac_quarterly},
          {"frac_annual", s.frac_annual},
          {"missing_prob", s.missing_prob},
          {"char_persistence", s.char_persistence},
          {"gen_kernel", kernel_to_json(s.gen_kernel)},
          {"regime_starts", s.regime_starts},
          {"target_r2", s.target_r2},
          {"noise_sd", s.noise_sd},
          {"n_landmarks", s.n_landmarks},
          {"seed", s.seed}};
}

RunConfig config_from_json_obj(const json& j) {
  RunConfig cfg;
  check_keys(j, "config",
             {"data_dir", "output_dir", "seed", "save_models", "split", "kernel_init",
              "optimizer", "portfolio", "sweep", "synth"});
  get_path(j, "config", "data_dir", cfg.data_dir);
  get_path(j, "config", "output_dir", cfg.output_dir);
  get_to(j, "config", "seed", cfg.seed);
  get_to(j, "config", "save_models", cfg.save_models);
  if (auto it = j.find("split"); it != j.end()) cfg.split = split_from_json(*it, cfg.split);
  if (auto it = j.find("kernel_init"); it != j.end())
    cfg.kernel_init = kernel_from_json(*it, cfg.kernel_init, "kernel_init");
  if (auto it = j.find("optimizer"); it != j.end()) cfg.opt = opt_from_json(*it, cfg.opt);
  if (auto it = j.find("portfolio"); it != j.end()) {
    check_keys(*it, "portfolio", {"gamma", "diag_cov"});
    get_to(*it, "portfolio", "gamma", cfg.portfolio.gamma);
    get_to(*it, "portfolio", "diag_cov", cfg.portfolio.diag_cov);
    if (!(cfg.portfolio.gamma > 0.0)) throw ConfigError("portfolio.gamma must be > 0");
  }
  if (auto it = j.find("sweep"); it != j.end()) cfg.sweep = sweep_from_json(*it, cfg.sweep);
  if (auto it = j.find("synth"); it != j.end()) cfg.synth = synth_from_json(*it, cfg.synth);
  return cfg;
}

json config_to_json_obj(const RunConfig& cfg) {
  json j;
  j["data_dir"] = cfg.data_dir.string();
  j["output_dir"] = cfg.output_dir.string();
  j["seed"] = cfg.seed;
  j["save_models"] = cfg.save_models;
  j["split"] = split_to_json(cfg.split);
  j["kernel_init"] = kernel_to_json(cfg.kernel_init);
  j["optimizer"] = opt_to_json(cfg.opt);
  j["portfolio"] = json{{"gamma", cfg.portfolio.gamma}, {"diag_cov", cfg.portfolio.diag_cov}};
  j["sweep"] = sweep_to_json(cfg.sweep);
  j["synth"] = synth_to_json(cfg.synth);
  return j;
}

// ---- shared writers --------------------------------------------------------

struct MetricsBundle {
  double r2_pool = 0.0;
  double r2_avg = 0.0;
  ICResult ic;
  std::vector<MonthId> r2_excluded;
};

MetricsBundle write_metrics_files(const fs::path& dir, const std::vector<PanelObs>& obs,
                                  const std::vector<double>& mkt) {
  MetricsBundle mb;
  mb.r2_pool = r2_pool(obs);
  mb.r2_avg = r2_avg(obs, &mb.r2_excluded);
  mb.ic = information_coefficient(obs);

  std::vector<std::vector<std::string>> rows;
  for (size_t t = 0; t < mb.ic.monthly.size(); ++t) {
    const MonthlyScore& s = mb.ic.monthly[t];
    rows.push_back({std::to_string(s.month_id), std::to_string(s.n),
                    s.r2_defined ? fmt_g(s.r2_t) : std::string(),
                    s.rho_defined ? fmt_g(s.rho_t) : std::string(), fmt_g(mkt[t])});
  }
  write_csv(dir / "monthly.csv", "metrics-monthly", {"month", "n", "r2_t", "rho_t", "mkt_ret"},
            rows);

  rows.clear();
  double sse = 0.0, ssr = 0.0, rho_sum = 0.0;
  int n_rho = 0;
  for (size_t t = 0; t < obs.size(); ++t) {
    sse += (obs[t].real - obs[t].pred).squaredNorm();
    ssr += obs[t].real.squaredNorm();
    const MonthlyScore& s = mb.ic.monthly[t];
    if (s.rho_defined) {
      rho_sum += s.rho_t;
      ++n_rho;
    }
    rows.push_back({std::to_string(s.month_id),
                    ssr > 0.0 ? fmt_g(1.0 - sse / ssr) : std::string(),
                    n_rho > 0 ? fmt_g(rho_sum / n_rho) : std::string()});
  }
  write_csv(dir / "expanding.csv", "metrics-expanding", {"month", "r2_pool", "ic"}, rows);

  rows.clear();
  rows.push_back({"r2_pool", fmt_g(mb.r2_pool)});
  rows.push_back({"r2_avg", fmt_g(mb.r2_avg)});
  rows.push_back({"ic", fmt_g(mb.ic.ic)});
  if (mb.ic.tstat) rows.push_back({"ic_tstat", fmt_g(*mb.ic.tstat)});
  rows.push_back({"test_months", std::to_string(obs.size())});
  size_t n_obs = 0;
  for (const auto& o : obs) n_obs += static_cast<size_t>(o.real.size());
  rows.push_back({"observations", std::to_string(n_obs)});
  write_csv(dir / "summary.csv", "metrics-summary", {"metric", "value"}, rows);

  std::vector<std::pair<Vec, Vec>> ab;
  ab.reserve(obs.size());
  for (const auto& o : obs) ab.emplace_back(o.pred, o.real);
  const Mat cop = decile_copula(ab);
  rows.clear();
  std::vector<std::string> header{"pred_decile"};
  for (int c = 1; c <= 10; ++c) header.push_back("real_d" + std::to_string(c));
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> row{"d" + std::to_string(i + 1)};
    for (int c = 0; c < 10; ++c) row.push_back(fmt_g(cop(i, c)));
    rows.push_back(std::move(row));
  }
  write_csv(dir / "copula.csv", "decile-copula", header, rows);

  rows.clear();
  {
    std::vector<double> ys, xs;
    for (size_t t = 0; t < mb.ic.monthly.size(); ++t)
      if (mb.ic.monthly[t].r2_defined) {
        ys.push_back(mb.ic.monthly[t].r2_t);
        xs.push_back(mkt[t]);
      }
    Vec y(static_cast<Eigen::Index>(ys.size())), x(static_cast<Eigen::Index>(xs.size()));
    for (size_t t = 0; t < ys.size(); ++t) {
      y(static_cast<Eigen::Index>(t)) = ys[t];
      x(static_cast<Eigen::Index>(t)) = xs[t];
    }
    try {
      const OLSResult o = ols_simple(y, x);
      rows.push_back({fmt_g(o.slope), fmt_g(o.intercept), fmt_g(o.se_slope),
                      fmt_g(o.se_intercept), std::to_string(o.n)});
    } catch (const UndefinedMetricError&) {
      // too few months or a constant market series; leave the table empty
    }
  }
  write_csv(dir / "ols_market.csv", "ols-market",
            {"slope", "intercept", "se_slope", "se_intercept", "n"}, rows);
  return mb;
}

struct PortfolioAccum {
  std::vector<MonthId> months;
  // realized simple excess returns per strategy; index 10 is long-short D10-D1
  std::array<std::array<std::vector<double>, 11>, kNumStrategies> series;
  // pooled portfolio-level R^2 accumulators on log returns
  std::array<std::array<double, 10>, kNumStrategies> num{}, den{};
};

void accumulate_portfolio(PortfolioAccum& acc, const MonthWeights& mw, const Vec& pred,
                          const Vec& r_log, const Vec& r_simple) {
  acc.months.push_back(mw.month);
  for (int s = 0; s < kNumStrategies; ++s) {
    double bottom = 0.0, top = 0.0;
    for (int d = 0; d < 10; ++d) {
      const auto& mem = mw.members[static_cast<size_t>(d)];
      if (mem.empty())
        throw UndefinedMetricError("decile portfolio undefined: decile " + std::to_string(d + 1) +
                                   " is empty in month " + std::to_string(mw.month));
      const Vec& w = mw.w[static_cast<size_t>(s)][static_cast<size_t>(d)];
      double rs = 0.0, rl = 0.0, pl = 0.0;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const auto a = static_cast<Eigen::Index>(mem[static_cast<size_t>(i)]);
        rs += w(i) * r_simple(a);
        rl += w(i) * r_log(a);
        pl += w(i) * pred(a);
      }
      acc.series[static_cast<size_t>(s)][static_cast<size_t>(d)].push_back(rs);
      acc.num[static_cast<size_t>(s)][static_cast<size_t>(d)] += (rl - pl) * (rl - pl);
      acc.den[static_cast<size_t>(s)][static_cast<size_t>(d)] += rl * rl;
      if (d == 0) bottom = rs;
      if (d == 9) top = rs;
    }
    acc.series[static_cast<size_t>(s)][10].push_back(top - bottom);
  }
}

std::string portfolio_label(int p) {
  return p < 10 ? "d" + std::to_string(p + 1) : std::string("long_short");
}

void write_portfolio_files(const fs::path& dir, const PortfolioAccum& acc) {
  std::vector<std::vector<std::string>> rows;
  for (int s = 0; s < kNumStrategies; ++s) {
    for (int p = 0; p <= 10; ++p) {
      try {
        const StrategyStats st = evaluate_series(acc.series[static_cast<size_t>(s)][static_cast<size_t>(p)]);
        rows.push_back({strategy_name(static_cast<Strategy>(s)), portfolio_label(p),
                        fmt_g(st.ann_mean), fmt_g(st.ann_sd), fmt_g(st.sharpe)});
      } catch (const UndefinedMetricError&) {
        // a one-month or zero-variance series has no annualized stats
      }
    }
  }
  write_csv(dir / "stats.csv", "portfolio-stats",
            {"strategy", "portfolio", "ann_mean", "ann_sd", "sharpe"}, rows);

  for (int s = 0; s < kNumStrategies; ++s) {
    std::array<std::vector<double>, 11> cum;
    for (int p = 0; p <= 10; ++p)
      cum[static_cast<size_t>(p)] = cumulative_log(acc.series[static_cast<size_t>(s)][static_cast<size_t>(p)]);
    rows.clear();
    for (size_t t = 0; t < acc.months.size(); ++t) {
      std::vector<std::string> row{std::to_string(acc.months[t])};
      for (int p = 0; p <= 10; ++p) row.push_back(fmt_g(cum[static_cast<size_t>(p)][t]));
      rows.push_back(std::move(row));
    }
    std::vector<std::string> header{"month"};
    for (int p = 0; p <= 10; ++p) header.push_back(portfolio_label(p));
    write_csv(dir / ("cumlog_" + std::string(strategy_name(static_cast<Strategy>(s))) + ".csv"),
              "portfolio-cumlog", header, rows);
  }

  rows.clear();
  for (int s = 0; s < kNumStrategies; ++s) {
    double tn = 0.0, td = 0.0;
    for (int d = 0; d < 10; ++d) {
      const double n2 = acc.num[static_cast<size_t>(s)][static_cast<size_t>(d)];
      const double d2 = acc.den[static_cast<size_t>(s)][static_cast<size_t>(d)];
      tn += n2;
      td += d2;
      if (d2 > 0.0)
        rows.push_back({strategy_name(static_cast<Strategy>(s)), "d" + std::to_string(d + 1),
                        fmt_g(1.0 - n2 / d2)});
    }
    if (td > 0.0)
      rows.push_back({strategy_name(static_cast<Strategy>(s)), "all", fmt_g(1.0 - tn / td)});
  }
  write_csv(dir / "decile_r2.csv", "portfolio-decile-r2", {"strategy", "portfolio", "r2"}, rows);
}

void write_month_weight_files(const fs::path& pdir, const MonthWeights& mw,
                              const std::vector<std::string>& names) {
  for (int s = 0; s < kNumStrategies; ++s) {
    std::vector<double> flat(names.size(), 0.0);
    for (int d = 0; d < 10; ++d) {
      const auto& mem = mw.members[static_cast<size_t>(d)];
      const Vec& w = mw.w[static_cast<size_t>(s)][static_cast<size_t>(d)];
      for (size_t i = 0; i < mem.size(); ++i)
        flat[static_cast<size_t>(mem[i])] = w.size() ? w(static_cast<Eigen::Index>(i)) : 0.0;
    }
    std::vector<std::vector<std::string>> rows;
    rows.reserve(names.size());
    for (size_t i = 0; i < names.size(); ++i)
      rows.push_back({names[i], std::to_string(mw.decile[i] + 1), fmt_g(flat[i])});
    write_csv(pdir / "weights" / strategy_name(static_cast<Strategy>(s)) / month_csv(mw.month),
              "portfolio-weights", {"asset_id", "decile", "weight"}, rows);
  }
}

void write_decile_cov(const fs::path& path, const MonthWeights& mw, const Mat& Sigma, bool diag) {
  std::vector<std::vector<std::string>> rows;
  for (int d = 0; d < 10; ++d) {
    const auto& mem = mw.members[static_cast<size_t>(d)];
    for (size_t i = 0; i < mem.size(); ++i) {
      const size_t j_end = diag ? i + 1 : mem.size();
      for (size_t j = i; j < j_end; ++j)
        rows.push_back({std::to_string(d + 1), std::to_string(i), std::to_string(j),
                        fmt_g(Sigma(mem[i], mem[j]))});
    }
  }
  write_csv(path, "decile-cov", {"decile", "i", "j", "value"}, rows);
}

void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("failed to write " + path.string());
}

RunConfig load_manifest_config(const fs::path& run_dir) {
  std::ifstream f(run_dir / "manifest.json", std::ios::binary);
  if (!f) throw DataError("missing manifest.json under " + run_dir.string());
  json man;
  try {
    man = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError("manifest.json: " + std::string(e.what()));
  }
  if (!man.contains("config")) throw DataError("manifest.json carries no config echo");
  return config_from_json_obj(man["config"]);
}

Vec read_predictions(const fs::path& path, const PanelSlice& sl) {
  const CsvFile f = read_csv(path, "predictions");
  if (f.rows.size() != sl.asset_names.size())
    throw DataError(path.string() + ": cross-section size does not match the panel");
  Vec pred(static_cast<Eigen::Index>(f.rows.size()));
  for (size_t i = 0; i < f.rows.size(); ++i) {
    if (f.rows[i][0] != sl.asset_names[i])
      throw DataError(path.string() + ": asset order differs from the panel at row " +
                      std::to_string(i + 2));
    pred(static_cast<Eigen::Index>(i)) = parse_double(f.rows[i][1], "predicted_return");
  }
  return pred;
}

double market_return(const PanelSlice& sl) {
  return sl.market_caps.dot(sl.simple_returns) / sl.market_caps.sum();
}

}  // namespace

RunConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config JSON: " + std::string(e.what()));
  }
  return config_from_json_obj(j);
}

std::string config_to_json(const RunConfig& cfg) { return config_to_json_obj(cfg).dump(2) + "\n"; }

RunSummary run_pipeline(const RunConfig& cfg) {
  cfg.split.validate();
  cfg.kernel_init.validate();
  if (cfg.data_dir.empty()) throw ConfigError("run: data_dir is required");
  if (cfg.output_dir.empty()) throw ConfigError("run: output_dir is required");

  const RawPanel raw = load_raw_panel(DataPaths::in_dir(cfg.data_dir));
  const PanelStore store(raw);
  PanelSource panel(store);

  const fs::path& out = cfg.output_dir;
  fs::create_directories(out / "predictions");
  fs::create_directories(out / "weights");
  fs::create_directories(out / "decile_cov");
  fs::create_directories(out / "metrics");
  for (int s = 0; s < kNumStrategies; ++s)
    fs::create_directories(out / "portfolio" / "weights" / strategy_name(static_cast<Strategy>(s)));
  if (cfg.save_models) fs::create_directories(out / "models");

  ModelCache cache(panel, cfg.kernel_init, cfg.opt, cfg.seed, cfg.split.train_start,
                   cfg.save_models ? out / "models" : fs::path{});
  OnlineRunner runner(panel, cache, cfg.split, cfg.portfolio.diag_cov);

  std::vector<PanelObs> obs;
  std::vector<double> mkt;
  PortfolioAccum acc;

  while (!runner.done()) {
    const StepOutput so = runner.step();
    const MonthId T = so.test_month;

    {
      const Vec var = so.pred.cov.diagonal();
      std::vector<std::vector<std::string>> rows;
      rows.reserve(so.asset_names.size());
      for (size_t i = 0; i < so.asset_names.size(); ++i)
        rows.push_back({so.asset_names[i], fmt_g(so.pred.mean(static_cast<Eigen::Index>(i))),
                        fmt_g(var(static_cast<Eigen::Index>(i)))});
      write_csv(out / "predictions" / month_csv(T), "predictions",
                {"asset_id", "predicted_return", "predictive_variance"}, rows);
    }
    {
      std::vector<std::vector<std::string>> rows;
      for (const auto& [m, w] : so.pred.weights.weights) {
        auto it = so.pred.weights.mse.find(m);
        rows.push_back({std::to_string(m), fmt_g(w),
                        it != so.pred.weights.mse.end() ? fmt_g(it->second) : std::string()});
      }
      write_csv(out / "weights" / month_csv(T), "mix-weights", {"model_month", "weight", "mse"},
                rows);
    }

    const Vec caps = panel.market_caps(T);
    const MonthWeights mw = build_month_weights(T, so.pred.mean, so.pred.cov, caps, cfg.portfolio);
    write_decile_cov(out / "decile_cov" / month_csv(T), mw, so.pred.cov, cfg.portfolio.diag_cov);
    write_month_weight_files(out / "portfolio", mw, so.asset_names);

    panel.set_clock(T);
    const Vec& r_log = panel.log_returns(T);
    const Vec& r_simple = panel.simple_returns(T);
    obs.push_back({T, so.pred.mean, r_log});
    mkt.push_back(caps.dot(r_simple) / caps.sum());
    accumulate_portfolio(acc, mw, so.pred.mean, r_log, r_simple);
  }

  const MetricsBundle mb = write_metrics_files(out / "metrics", obs, mkt);
  write_portfolio_files(out / "portfolio", acc);

  {
    // the one wall-clock output; excluded from the byte-identity contract
    std::vector<std::vector<std::string>> rows;
    double total = 0.0;
    for (const auto& [m, sec] : cache.fit_seconds()) {
      rows.push_back({std::to_string(m), fmt_g(sec)});
      total += sec;
    }
    rows.push_back({"total", fmt_g(total)});
    write_csv(out / "timings.csv", "timings", {"month", "seconds"}, rows);
  }

  {
    json man;
    man["format"] = "gpens-manifest v1";
    man["config"] = config_to_json_obj(cfg);
    json months = json::array();
    json escalations = json::array();
    for (const auto& [m, rec] : cache.records()) {
      json e;
      e["month"] = rec.month;
      e["sigma"] = rec.params.sigma;
      e["alpha"] = rec.params.alpha;
      e["beta"] = rec.params.beta;
      e["noise_var"] = rec.params.noise_var;
      e["mll"] = rec.mll;
      e["jitter"] = rec.jitter;
      e["iterations"] = rec.iterations;
      e["starts_abandoned"] = rec.starts_abandoned;
      e["train_n"] = rec.train_n;
      e["train_d"] = rec.train_d;
      e["train_checksum"] = hex64(rec.train_checksum);
      months.push_back(std::move(e));
      if (rec.jitter > rec.params.noise_var) escalations.push_back(rec.month);
    }
    man["months"] = std::move(months);
    man["jitter_escalations"] = std::move(escalations);
    size_t violations = 0;
    for (const auto& a : panel.access_log())
      if (!a.ok) ++violations;
    man["audit"] = {{"reads", panel.access_log().size()}, {"violations", violations}};
    json met;
    met["r2_pool"] = mb.r2_pool;
    met["r2_avg"] = mb.r2_avg;
    met["ic"] = mb.ic.ic;
    if (mb.ic.tstat)
      met["ic_tstat"] = *mb.ic.tstat;
    else
      met["ic_tstat"] = nullptr;
    met["test_months"] = obs.size();
    man["metrics"] = std::move(met);
    write_text_file(out / "manifest.json", man.dump(2) + "\n");
  }

  RunSummary rs;
  rs.r2_pool = mb.r2_pool;
  rs.r2_avg = mb.r2_avg;
  rs.ic = mb.ic.ic;
  rs.ic_tstat = mb.ic.tstat;
  rs.n_test_months = static_cast<int>(obs.size());
  rs.fits = cache.fit_count();
  rs.loads = cache.load_count();
  rs.hits = cache.hit_count();
  return rs;
}

std::vector<SweepRow> sweep_pipeline(const RunConfig& cfg) {
  cfg.kernel_init.validate();  // span and per-K checks happen inside sweep()
  if (cfg.data_dir.empty()) throw ConfigError("sweep: data_dir is required");
  if (cfg.output_dir.empty()) throw ConfigError("sweep: output_dir is required");

  const RawPanel raw = load_raw_panel(DataPaths::in_dir(cfg.data_dir));
  const PanelStore store(raw);
  PanelSource panel(store);

  if (cfg.save_models) fs::create_directories(cfg.output_dir / "models");
  ModelCache cache(panel, cfg.kernel_init, cfg.opt, cfg.seed, cfg.split.train_start,
                   cfg.save_models ? cfg.output_dir / "models" : fs::path{});

  const std::vector<SweepRow> rows = sweep(panel, cache, cfg.split, cfg.sweep);

  std::vector<std::vector<std::string>> csv;
  csv.reserve(rows.size());
  for (const SweepRow& r : rows)
    csv.push_back({scheme_name(r.scheme), std::to_string(r.K), weight_scheme_name(r.weight_scheme),
                   fmt_g(r.r2_pool), fmt_g(r.r2_avg), fmt_g(r.ic),
                   r.ic_tstat ? fmt_g(*r.ic_tstat) : std::string(), std::to_string(r.n_months)});
  write_csv(cfg.output_dir / "sweep.csv", "sweep",
            {"scheme", "K", "weight_scheme", "r2_pool", "r2_avg", "ic", "ic_tstat", "n_months"},
            csv);
  return rows;
}

SynthOutput synth_pipeline(const SynthConfig& scfg, const fs::path& out_dir) {
  scfg.validate();
  if (out_dir.empty()) throw ConfigError("synth: output directory is required");
  SynthOutput out = synthesize(scfg);
  const DataPaths paths = DataPaths::in_dir(out_dir);
  write_raw_panel(paths, out.panel);
  const PanelStore store(out.panel);
  write_truth(paths.truth, out.panel, out.true_means, store);

  json meta;
  meta["config"] = synth_to_json(scfg);
  meta["noise_var"] = out.noise_var;
  meta["mean_sq_signal"] = out.mean_sq_signal;
  meta["r2_ceiling"] = out.r2_ceiling;
  write_text_file(out_dir / "synth_meta.json", meta.dump(2) + "\n");
  return out;
}

RunSummary metrics_from_outputs(const fs::path& run_dir, const fs::path& data_dir) {
  RunConfig cfg = load_manifest_config(run_dir);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  const RawPanel raw = load_raw_panel(DataPaths::in_dir(cfg.data_dir));
  const PanelStore store(raw);

  std::vector<PanelObs> obs;
  std::vector<double> mkt;
  for (MonthId T = cfg.split.test_start; T <= cfg.split.test_end; ++T) {
    const PanelSlice& sl = store.slice(T);
    obs.push_back({T, read_predictions(run_dir / "predictions" / month_csv(T), sl),
                   sl.log_returns});
    mkt.push_back(market_return(sl));
  }
  const MetricsBundle mb = write_metrics_files(run_dir / "metrics", obs, mkt);

  RunSummary rs;
  rs.r2_pool = mb.r2_pool;
  rs.r2_avg = mb.r2_avg;
  rs.ic = mb.ic.ic;
  rs.ic_tstat = mb.ic.tstat;
  rs.n_test_months = static_cast<int>(obs.size());
  return rs;
}

void portfolio_from_outputs(const fs::path& run_dir, const fs::path& data_dir) {
  RunConfig cfg = load_manifest_config(run_dir);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  const RawPanel raw = load_raw_panel(DataPaths::in_dir(cfg.data_dir));
  const PanelStore store(raw);

  PortfolioAccum acc;
  for (MonthId T = cfg.split.test_start; T <= cfg.split.test_end; ++T) {
    const PanelSlice& sl = store.slice(T);
    const Vec pred = read_predictions(run_dir / "predictions" / month_csv(T), sl);

    const std::vector<int> deciles = assign_deciles(pred);
    std::array<std::vector<int>, 10> members;
    for (size_t i = 0; i < deciles.size(); ++i)
      members[static_cast<size_t>(deciles[i])].push_back(static_cast<int>(i));
    std::array<Mat, 10> blocks;
    for (int d = 0; d < 10; ++d) {
      const auto nd = static_cast<Eigen::Index>(members[static_cast<size_t>(d)].size());
      blocks[static_cast<size_t>(d)] = Mat::Zero(nd, nd);
    }
    const fs::path cov_path = run_dir / "decile_cov" / month_csv(T);
    const CsvFile f = read_csv(cov_path, "decile-cov");
    for (size_t r = 0; r < f.rows.size(); ++r) {
      const auto& row = f.rows[r];
      const long d = parse_long(row[0], "decile") - 1;
      const long i = parse_long(row[1], "i");
      const long j = parse_long(row[2], "j");
      if (d < 0 || d >= 10) throw DataError(cov_path.string() + ": decile out of range");
      Mat& B = blocks[static_cast<size_t>(d)];
      if (i < 0 || j < i || j >= B.rows())
        throw DataError(cov_path.string() + ": block index out of range at row " +
                        std::to_string(r + 2));
      const double v = parse_double(row[3], "value");
      B(i, j) = v;
      B(j, i) = v;
    }

    const MonthWeights mw =
        build_month_weights_blocks(T, pred, blocks, sl.market_caps, cfg.portfolio);
    write_month_weight_files(run_dir / "portfolio", mw, sl.asset_names);
    accumulate_portfolio(acc, mw, pred, sl.log_returns, sl.simple_returns);
  }
  write_portfolio_files(run_dir / "portfolio", acc);
}

}  // namespace gpens
