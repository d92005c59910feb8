#include "gpens/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gpens {

std::string fmt_g(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("fmt_g: refusing to serialize non-finite");
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw DataError("bad number '" + s + "' in " + context);
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError("bad integer '" + s + "' in " + context);
  return v;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    const size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

CsvFile read_csv(const fs::path& path, const std::string& expect_schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvFile f;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && line.rfind("# gpens-csv", 0) == 0) {
      std::istringstream hs(line);
      std::string hash, name, version;
      hs >> hash >> name >> version >> f.schema;
      if (version != "v1")
        throw DataError(path.string() + ": unsupported schema version '" + version + "'");
      if (f.schema != expect_schema)
        throw DataError(path.string() + ": schema '" + f.schema + "', expected '" +
                        expect_schema + "'");
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    if (f.header.empty()) {
      f.header = split_line(line);
      continue;
    }
    auto fields = split_line(line);
    if (fields.size() != f.header.size())
      throw DataError(path.string() + ": row with " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(f.header.size()));
    f.rows.push_back(std::move(fields));
  }
  if (f.header.empty()) throw DataError(path.string() + ": missing header row");
  return f;
}

void write_csv(const fs::path& path, const std::string& schema,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# gpens-csv v1 " << schema << "\n";
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row width mismatch in " + path.string());
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw DataError("write failed for " + path.string());
}

DataPaths DataPaths::in_dir(const fs::path& dir) {
  DataPaths p;
  p.characteristics = dir / "characteristics.csv";
  p.frequencies = dir / "frequencies.csv";
  p.macro = dir / "macro.csv";
  p.returns = dir / "returns.csv";
  p.truth = dir / "truth.csv";
  return p;
}

RawPanel load_raw_panel(const DataPaths& paths) {
  const CsvFile freq = read_csv(paths.frequencies, "frequencies");
  const CsvFile chars = read_csv(paths.characteristics, "characteristics");
  const CsvFile macro = read_csv(paths.macro, "macro");
  const CsvFile rets = read_csv(paths.returns, "returns");

  RawPanel panel;
  if (freq.header != std::vector<std::string>{"characteristic", "frequency"})
    throw DataError(paths.frequencies.string() + ": expected header characteristic,frequency");
  for (const auto& row : freq.rows) panel.char_freq.push_back(parse_frequency(row[1]));
  panel.n_chars = static_cast<int>(panel.char_freq.size());
  if (panel.n_chars == 0) throw DataError(paths.frequencies.string() + ": no characteristics");

  if (chars.header.size() != static_cast<size_t>(panel.n_chars) + 2 ||
      chars.header[0] != "month" || chars.header[1] != "asset_id")
    throw DataError(paths.characteristics.string() +
                    ": expected header month,asset_id,<one column per characteristic>");
  for (int k = 0; k < panel.n_chars; ++k)
    if (chars.header[static_cast<size_t>(k) + 2] != freq.rows[static_cast<size_t>(k)][0])
      throw DataError(paths.characteristics.string() + ": column '" +
                      chars.header[static_cast<size_t>(k) + 2] +
                      "' does not match frequencies row '" +
                      freq.rows[static_cast<size_t>(k)][0] + "'");

  if (macro.header.empty() || macro.header[0] != "month")
    throw DataError(paths.macro.string() + ": expected header month,<macro columns>");
  panel.n_macro = static_cast<int>(macro.header.size()) - 1;

  const std::vector<std::string> want_ret = {"month", "asset_id", "excess_log_return",
                                             "excess_simple_return", "market_cap"};
  if (rets.header != want_ret)
    throw DataError(paths.returns.string() +
                    ": expected header month,asset_id,excess_log_return,excess_simple_return,"
                    "market_cap");
  if (rets.rows.empty()) throw DataError(paths.returns.string() + ": no data rows");

  // Asset registry in order of first appearance in the returns file.
  std::map<std::string, int> asset_index;
  for (const auto& row : rets.rows) {
    if (row[1].empty()) throw DataError(paths.returns.string() + ": empty asset_id");
    if (asset_index.emplace(row[1], static_cast<int>(panel.asset_names.size())).second)
      panel.asset_names.push_back(row[1]);
  }

  MonthId lo = std::numeric_limits<MonthId>::max(), hi = std::numeric_limits<MonthId>::min();
  for (const auto& row : rets.rows) {
    const auto m = static_cast<MonthId>(parse_long(row[0], paths.returns.string()));
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  panel.first_month = lo;
  const int n_months = hi - lo + 1;
  panel.months.resize(static_cast<size_t>(n_months));

  struct Row {
    double lr, sr, cap;
  };
  std::vector<std::map<int, Row>> by_month(static_cast<size_t>(n_months));
  for (const auto& row : rets.rows) {
    const auto m = static_cast<MonthId>(parse_long(row[0], paths.returns.string()));
    const int a = asset_index.at(row[1]);
    Row r{parse_double(row[2], "returns month " + row[0]),
          parse_double(row[3], "returns month " + row[0]),
          parse_double(row[4], "returns month " + row[0])};
    if (!by_month[static_cast<size_t>(m - lo)].emplace(a, r).second)
      throw DataError(paths.returns.string() + ": duplicate (month " + row[0] + ", asset " +
                      row[1] + ")");
  }
  for (int mi = 0; mi < n_months; ++mi) {
    auto& md = panel.months[static_cast<size_t>(mi)];
    const auto& rows = by_month[static_cast<size_t>(mi)];
    if (rows.empty())
      throw DataError(paths.returns.string() + ": month " + std::to_string(lo + mi) +
                      " has no assets (months must be contiguous)");
    const auto n = static_cast<Eigen::Index>(rows.size());
    md.log_ret.resize(n);
    md.simple_ret.resize(n);
    md.mcap.resize(n);
    md.chars = Mat::Constant(n, panel.n_chars, std::numeric_limits<double>::quiet_NaN());
    Eigen::Index i = 0;
    for (const auto& [a, r] : rows) {
      md.assets.push_back(a);
      md.log_ret(i) = r.lr;
      md.simple_ret(i) = r.sr;
      md.mcap(i) = r.cap;
      ++i;
    }
  }

  for (const auto& row : macro.rows) {
    const auto m = static_cast<MonthId>(parse_long(row[0], paths.macro.string()));
    if (m < lo || m > hi) continue;  // macro may cover a wider range
    auto& md = panel.months[static_cast<size_t>(m - lo)];
    md.macro.resize(panel.n_macro);
    for (int l = 0; l < panel.n_macro; ++l)
      md.macro(l) = parse_double(row[static_cast<size_t>(l) + 1], "macro month " + row[0]);
  }
  for (int mi = 0; mi < n_months; ++mi)
    if (panel.months[static_cast<size_t>(mi)].macro.size() != panel.n_macro)
      throw DataError(paths.macro.string() + ": missing month " + std::to_string(lo + mi));

  for (const auto& row : chars.rows) {
    const auto m = static_cast<MonthId>(parse_long(row[0], paths.characteristics.string()));
    if (m < lo || m > hi)
      throw DataError(paths.characteristics.string() + ": month " + row[0] +
                      " outside the returns range");
    auto it = asset_index.find(row[1]);
    if (it == asset_index.end())
      throw DataError(paths.characteristics.string() + ": asset '" + row[1] +
                      "' never appears in the returns file");
    auto& md = panel.months[static_cast<size_t>(m - lo)];
    const auto pos = std::lower_bound(md.assets.begin(), md.assets.end(), it->second);
    if (pos == md.assets.end() || *pos != it->second)
      throw DataError(paths.characteristics.string() + ": asset '" + row[1] +
                      "' has characteristics but no return in month " + row[0]);
    const auto i = static_cast<Eigen::Index>(pos - md.assets.begin());
    for (int k = 0; k < panel.n_chars; ++k) {
      const std::string& field = row[static_cast<size_t>(k) + 2];
      if (field.empty()) continue;  // missing
      md.chars(i, k) = parse_double(field, "characteristics month " + row[0]);
    }
  }

  panel.validate();
  return panel;
}

void write_raw_panel(const DataPaths& paths, const RawPanel& panel) {
  panel.validate();
  std::vector<std::vector<std::string>> freq_rows;
  for (int k = 0; k < panel.n_chars; ++k)
    freq_rows.push_back({"c" + std::to_string(k + 1),
                         frequency_name(panel.char_freq[static_cast<size_t>(k)])});
  write_csv(paths.frequencies, "frequencies", {"characteristic", "frequency"}, freq_rows);

  std::vector<std::string> chead = {"month", "asset_id"};
  for (int k = 0; k < panel.n_chars; ++k) chead.push_back("c" + std::to_string(k + 1));
  std::vector<std::vector<std::string>> crows;
  std::vector<std::string> mhead = {"month"};
  for (int l = 0; l < panel.n_macro; ++l) mhead.push_back("m" + std::to_string(l + 1));
  std::vector<std::vector<std::string>> mrows;
  std::vector<std::vector<std::string>> rrows;

  for (size_t mi = 0; mi < panel.months.size(); ++mi) {
    const MonthId m = panel.first_month + static_cast<MonthId>(mi);
    const auto& md = panel.months[mi];
    std::vector<std::string> mrow = {std::to_string(m)};
    for (int l = 0; l < panel.n_macro; ++l) mrow.push_back(fmt_g(md.macro(l)));
    mrows.push_back(std::move(mrow));
    for (size_t i = 0; i < md.assets.size(); ++i) {
      const std::string& name = panel.asset_names[static_cast<size_t>(md.assets[i])];
      std::vector<std::string> crow = {std::to_string(m), name};
      bool any = false;
      for (int k = 0; k < panel.n_chars; ++k) {
        const double v = md.chars(static_cast<Eigen::Index>(i), k);
        if (std::isnan(v)) {
          crow.push_back("");
        } else {
          crow.push_back(fmt_g(v));
          any = true;
        }
      }
      if (any) crows.push_back(std::move(crow));
      rrows.push_back({std::to_string(m), name, fmt_g(md.log_ret(static_cast<Eigen::Index>(i))),
                       fmt_g(md.simple_ret(static_cast<Eigen::Index>(i))),
                       fmt_g(md.mcap(static_cast<Eigen::Index>(i)))});
    }
  }
  write_csv(paths.characteristics, "characteristics", chead, crows);
  write_csv(paths.macro, "macro", mhead, mrows);
  write_csv(paths.returns, "returns",
            {"month", "asset_id", "excess_log_return", "excess_simple_return", "market_cap"},
            rrows);
}

void write_truth(const fs::path& path, const RawPanel& panel,
                 const std::map<MonthId, Vec>& true_means, const PanelStore& store) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [m, mu] : true_means) {
    const PanelSlice& s = store.slice(m);
    if (mu.size() != static_cast<Eigen::Index>(s.assets.size()))
      throw std::invalid_argument("write_truth: misaligned truth for month " + std::to_string(m));
    for (Eigen::Index i = 0; i < mu.size(); ++i)
      rows.push_back({std::to_string(m),
                      panel.asset_names[static_cast<size_t>(s.assets[static_cast<size_t>(i)])],
                      fmt_g(mu(i))});
  }
  write_csv(path, "truth", {"month", "asset_id", "true_mean"}, rows);
}

std::map<MonthId, std::map<std::string, double>> load_truth(const fs::path& path) {
  const CsvFile f = read_csv(path, "truth");
  std::map<MonthId, std::map<std::string, double>> out;
  for (const auto& row : f.rows) {
    const auto m = static_cast<MonthId>(parse_long(row[0], path.string()));
    out[m][row[1]] = parse_double(row[2], path.string());
  }
  return out;
}

void save_model(const fs::path& path, const ModelRecord& rec) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "gpens-model v1\n";
  out << "month " << rec.month << "\n";
  out << "seed " << rec.seed << "\n";
  out << "opt_hash " << rec.opt_hash << "\n";
  out << "train_n " << rec.train_n << "\n";
  out << "train_d " << rec.train_d << "\n";
  out << "train_checksum " << rec.train_checksum << "\n";
  out << "sigma " << fmt_g(rec.params.sigma) << "\n";
  out << "alpha " << fmt_g(rec.params.alpha) << "\n";
  out << "beta " << fmt_g(rec.params.beta) << "\n";
  out << "noise_var " << fmt_g(rec.params.noise_var) << "\n";
  out << "mll " << fmt_g(rec.mll) << "\n";
  out << "jitter " << fmt_g(rec.jitter) << "\n";
  out << "iterations " << rec.iterations << "\n";
  out << "starts_abandoned " << rec.starts_abandoned << "\n";
  if (!out) throw DataError("write failed for " + path.string());
}

std::optional<ModelRecord> load_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != "gpens-model v1") return std::nullopt;
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t sp = line.find(' ');
    if (sp == std::string::npos) return std::nullopt;
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  const char* keys[] = {"month",  "seed",  "opt_hash",  "train_n",
                        "train_d", "train_checksum", "sigma", "alpha",
                        "beta",   "noise_var", "mll", "jitter",
                        "iterations", "starts_abandoned"};
  for (const char* k : keys)
    if (!kv.count(k)) return std::nullopt;
  ModelRecord r;
  const std::string ctx = path.string();
  try {
    r.month = static_cast<MonthId>(parse_long(kv["month"], ctx));
    r.seed = static_cast<uint64_t>(std::stoull(kv["seed"]));
    r.opt_hash = static_cast<uint64_t>(std::stoull(kv["opt_hash"]));
    r.train_n = parse_long(kv["train_n"], ctx);
    r.train_d = parse_long(kv["train_d"], ctx);
    r.train_checksum = static_cast<uint64_t>(std::stoull(kv["train_checksum"]));
    r.params.sigma = parse_double(kv["sigma"], ctx);
    r.params.alpha = parse_double(kv["alpha"], ctx);
    r.params.beta = parse_double(kv["beta"], ctx);
    r.params.noise_var = parse_double(kv["noise_var"], ctx);
    r.mll = parse_double(kv["mll"], ctx);
    r.jitter = parse_double(kv["jitter"], ctx);
    r.iterations = static_cast<int>(parse_long(kv["iterations"], ctx));
    r.starts_abandoned = static_cast<int>(parse_long(kv["starts_abandoned"], ctx));
  } catch (const std::exception&) {
    return std::nullopt;  // treat a corrupt or foreign file as a cache miss
  }
  return r;
}

}  // namespace gpens
