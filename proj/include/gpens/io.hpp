#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpens/gp.hpp"
#include "gpens/panel.hpp"

namespace gpens {

namespace fs = std::filesystem;

/// Shortest decimal form that round-trips the exact double (%.17g precision
/// trimmed by to_chars); CSV and manifest output share it so reruns are
/// byte-identical.
std::string fmt_g(double v);

/// Strict double parse of a whole field.
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

/// Minimal CSV: comma-separated, no quoting (fields must not contain commas),
/// optional "# gpens-csv v1 <name>" first line which is validated when present.
struct CsvFile {
  std::string schema;  // empty if the version line was absent
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvFile read_csv(const fs::path& path, const std::string& expect_schema);
void write_csv(const fs::path& path, const std::string& schema,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Input file names within a data directory.
struct DataPaths {
  fs::path characteristics, frequencies, macro, returns, truth;
  static DataPaths in_dir(const fs::path& dir);
};

/// Load the four-file panel schema. Asset indices follow first appearance in
/// the returns file, so a written panel reloads into an identical RawPanel.
RawPanel load_raw_panel(const DataPaths& paths);

void write_raw_panel(const DataPaths& paths, const RawPanel& panel);

/// Ground-truth sidecar of a synthetic panel: month -> (asset name -> mean).
void write_truth(const fs::path& path, const RawPanel& panel,
                 const std::map<MonthId, Vec>& true_means, const PanelStore& store);
std::map<MonthId, std::map<std::string, double>> load_truth(const fs::path& path);

/// Per-month persisted model: everything needed to rebuild the FittedGP from
/// the panel without re-optimizing, plus identity fields guarding reuse.
struct ModelRecord {
  MonthId month = -1;
  uint64_t seed = 0;
  uint64_t opt_hash = 0;
  Eigen::Index train_n = 0, train_d = 0;
  uint64_t train_checksum = 0;
  KernelParams params;
  double mll = 0.0;
  double jitter = 0.0;
  // fit diagnostics carried into the manifest
  int iterations = 0;
  int starts_abandoned = 0;
};

void save_model(const fs::path& path, const ModelRecord& rec);
std::optional<ModelRecord> load_model(const fs::path& path);  // nullopt: absent/foreign file

}  // namespace gpens
