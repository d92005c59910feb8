#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpens/pipeline.hpp"

using namespace gpens;

namespace {

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::string text{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return config_from_json(text);
}

void apply_workers(int flag) {
  int n = flag;
  if (n <= 0) {
    if (const char* env = std::getenv("GPENS_WORKERS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (env[0] == '\0' || end == nullptr || *end != '\0' || v < 1)
        throw ConfigError("GPENS_WORKERS must be a positive integer");
      n = static_cast<int>(v);
    }
  }
  if (n > 0) omp_set_num_threads(n);
}

void print_summary(const RunSummary& rs) {
  std::cout << "r2_pool " << fmt_g(rs.r2_pool) << "\n"
            << "r2_avg  " << fmt_g(rs.r2_avg) << "\n"
            << "ic      " << fmt_g(rs.ic);
  if (rs.ic_tstat) std::cout << " (t " << fmt_g(*rs.ic_tstat) << ")";
  std::cout << "\n"
            << "months  " << rs.n_test_months << "  fits " << rs.fits << "  loads " << rs.loads
            << "  hits " << rs.hits << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ensemble Gaussian process panel prediction"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 0;
  app.add_option("--config", config_path, "JSON configuration file")->envname("GPENS_CONFIG");
  app.add_option("--workers", workers, "worker thread count (or GPENS_WORKERS)");

  // synth ---------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic panel");
  std::string synth_out;
  uint64_t synth_seed = 0;
  int synth_months = 0, synth_assets = 0;
  double synth_target_r2 = 0.0, synth_missing = 0.0;
  std::vector<MonthId> regime_starts;
  synth_cmd->add_option("--out", synth_out, "data directory to write")->required();
  auto* o_sseed = synth_cmd->add_option("--seed", synth_seed, "generator seed");
  auto* o_smonths = synth_cmd->add_option("--months", synth_months, "raw calendar months");
  auto* o_sassets = synth_cmd->add_option("--assets", synth_assets, "cross-section size");
  auto* o_starget = synth_cmd->add_option("--target-r2", synth_target_r2, "pooled R2 of truth");
  auto* o_smissing = synth_cmd->add_option("--missing-prob", synth_missing, "missing value rate");
  auto* o_sregime =
      synth_cmd->add_option("--regime-start", regime_starts, "month where the surface is redrawn");

  // run -----------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "fit the month chain and predict the test span");
  std::string run_data, run_out, run_scheme, run_wscheme;
  uint64_t run_seed = 0;
  int run_K = 0;
  MonthId tr0 = 0, va0 = 0, te0 = 0, te1 = 0;
  double gamma = 0.0;
  bool frozen = false, diag_cov = false, no_save = false;
  auto* o_rdata = run_cmd->add_option("--data", run_data, "panel data directory");
  auto* o_rout = run_cmd->add_option("--out", run_out, "output directory");
  auto* o_rseed = run_cmd->add_option("--seed", run_seed, "fit seed");
  auto* o_rscheme = run_cmd->add_option("--scheme", run_scheme, "rolling|recursive");
  auto* o_rK = run_cmd->add_option("--window", run_K, "rolling window length K");
  auto* o_rws = run_cmd->add_option("--weight-scheme", run_wscheme, "equal|mse");
  auto* o_tr0 = run_cmd->add_option("--train-start", tr0, "first training month");
  auto* o_va0 = run_cmd->add_option("--validation-start", va0, "first validation month");
  auto* o_te0 = run_cmd->add_option("--test-start", te0, "first test month");
  auto* o_te1 = run_cmd->add_option("--test-end", te1, "last test month");
  auto* o_frozen = run_cmd->add_flag("--frozen-window", frozen, "pin the rolling window at test-start");
  auto* o_gamma = run_cmd->add_option("--gamma", gamma, "uncertainty aversion");
  auto* o_diag = run_cmd->add_flag("--diag-cov", diag_cov, "diagonal predictive covariance");
  auto* o_nosave = run_cmd->add_flag("--no-save-models", no_save, "skip the models/ directory");

  // sweep -----------------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "score window lengths on the validation span");
  std::string sw_data, sw_out;
  uint64_t sw_seed = 0;
  std::vector<int> sw_Ks;
  bool sw_recursive = false;
  MonthId str0 = 0, sva0 = 0, ste0 = 0, ste1 = 0;
  auto* o_wdata = sweep_cmd->add_option("--data", sw_data, "panel data directory");
  auto* o_wout = sweep_cmd->add_option("--out", sw_out, "output directory");
  auto* o_wseed = sweep_cmd->add_option("--seed", sw_seed, "fit seed");
  auto* o_wKs = sweep_cmd->add_option("--window", sw_Ks, "rolling window lengths to score");
  auto* o_wrec = sweep_cmd->add_flag("--recursive", sw_recursive, "also score the recursive scheme");
  auto* o_wtr0 = sweep_cmd->add_option("--train-start", str0, "first training month");
  auto* o_wva0 = sweep_cmd->add_option("--validation-start", sva0, "first validation month");
  auto* o_wte0 = sweep_cmd->add_option("--test-start", ste0, "first test month");
  auto* o_wte1 = sweep_cmd->add_option("--test-end", ste1, "last test month");

  // metrics / portfolio rebuilds ------------------------------------------
  auto* metrics_cmd = app.add_subcommand("metrics", "rebuild metrics/ from stored predictions");
  std::string m_run, m_data;
  metrics_cmd->add_option("--run", m_run, "finished run directory")->required();
  metrics_cmd->add_option("--data", m_data, "panel data directory (default: from the manifest)");

  auto* port_cmd = app.add_subcommand("portfolio", "rebuild portfolio/ from stored predictions");
  std::string p_run, p_data;
  port_cmd->add_option("--run", p_run, "finished run directory")->required();
  port_cmd->add_option("--data", p_data, "panel data directory (default: from the manifest)");

  try {
    app.parse(argc, argv);
    apply_workers(workers);
    RunConfig cfg = load_config(config_path);

    if (synth_cmd->parsed()) {
      SynthConfig sc = cfg.synth;
      if (o_sseed->count()) sc.seed = synth_seed;
      if (o_smonths->count()) sc.n_months = synth_months;
      if (o_sassets->count()) sc.n_assets = synth_assets;
      if (o_starget->count()) sc.target_r2 = synth_target_r2;
      if (o_smissing->count()) sc.missing_prob = synth_missing;
      if (o_sregime->count()) sc.regime_starts = regime_starts;
      const SynthOutput out = synth_pipeline(sc, synth_out);
      const PanelStore store(out.panel);
      std::cout << "panel " << out.panel.months.size() << " months, slices "
                << store.first_slice() << ".." << store.last_slice() << "\n"
                << "noise_var " << fmt_g(out.noise_var) << "  r2_ceiling "
                << fmt_g(out.r2_ceiling) << "\n"
                << "wrote " << synth_out << "\n";
    } else if (run_cmd->parsed()) {
      if (o_rdata->count()) cfg.data_dir = run_data;
      if (o_rout->count()) cfg.output_dir = run_out;
      if (o_rseed->count()) cfg.seed = run_seed;
      if (o_rscheme->count()) cfg.split.scheme = parse_scheme(run_scheme);
      if (o_rK->count()) cfg.split.K = run_K;
      if (o_rws->count()) cfg.split.weight_scheme = parse_weight_scheme(run_wscheme);
      if (o_tr0->count()) cfg.split.train_start = tr0;
      if (o_va0->count()) cfg.split.validation_start = va0;
      if (o_te0->count()) cfg.split.test_start = te0;
      if (o_te1->count()) cfg.split.test_end = te1;
      if (o_frozen->count()) cfg.split.frozen_window = frozen;
      if (o_gamma->count()) cfg.portfolio.gamma = gamma;
      if (o_diag->count()) cfg.portfolio.diag_cov = diag_cov;
      if (o_nosave->count()) cfg.save_models = !no_save;
      print_summary(run_pipeline(cfg));
      std::cout << "wrote " << cfg.output_dir.string() << "\n";
    } else if (sweep_cmd->parsed()) {
      if (o_wdata->count()) cfg.data_dir = sw_data;
      if (o_wout->count()) cfg.output_dir = sw_out;
      if (o_wseed->count()) cfg.seed = sw_seed;
      if (o_wKs->count()) cfg.sweep.Ks = sw_Ks;
      if (o_wrec->count()) cfg.sweep.include_recursive = sw_recursive;
      if (o_wtr0->count()) cfg.split.train_start = str0;
      if (o_wva0->count()) cfg.split.validation_start = sva0;
      if (o_wte0->count()) cfg.split.test_start = ste0;
      if (o_wte1->count()) cfg.split.test_end = ste1;
      const auto rows = sweep_pipeline(cfg);
      std::cout << "scheme K weight_scheme r2_pool r2_avg ic\n";
      for (const SweepRow& r : rows)
        std::cout << scheme_name(r.scheme) << " " << r.K << " "
                  << weight_scheme_name(r.weight_scheme) << " " << fmt_g(r.r2_pool) << " "
                  << fmt_g(r.r2_avg) << " " << fmt_g(r.ic) << "\n";
      std::cout << "wrote " << (cfg.output_dir / "sweep.csv").string() << "\n";
    } else if (metrics_cmd->parsed()) {
      print_summary(metrics_from_outputs(m_run, m_data));
      std::cout << "rebuilt " << (fs::path(m_run) / "metrics").string() << "\n";
    } else if (port_cmd->parsed()) {
      portfolio_from_outputs(p_run, p_data);
      std::cout << "rebuilt " << (fs::path(p_run) / "portfolio").string() << "\n";
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
