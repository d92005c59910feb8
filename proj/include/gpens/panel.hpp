#pragma once

#include <limits>
#include <string>
#include <vector>

#include "gpens/types.hpp"

namespace gpens {

enum class Frequency { Monthly, Quarterly, Annual };

/// Publication lag in months: the value usable at formation time t is the last
/// one released at or before t - lag.
inline int lag_months(Frequency f) {
  switch (f) {
    case Frequency::Monthly: return 1;
    case Frequency::Quarterly: return 4;
    case Frequency::Annual: return 6;
  }
  throw ConfigError("unknown characteristic frequency");
}

Frequency parse_frequency(const std::string& s);
std::string frequency_name(Frequency f);

/// As-loaded panel data, one record block per calendar month. Months are
/// ordinal and contiguous: month_id = first_month + index. Characteristic
/// entries are NaN where missing (including months between releases of
/// quarterly/annual series). Returns are the excess log / simple returns
/// realized over the record's month; market caps are end-of-month.
struct RawPanel {
  MonthId first_month = 0;
  int n_chars = 0;
  int n_macro = 0;
  std::vector<std::string> asset_names;  // global universe, index = asset id
  std::vector<Frequency> char_freq;      // per characteristic

  struct MonthData {
    std::vector<int> assets;  // indices into asset_names, strictly increasing
    Mat chars;                // |assets| x n_chars, NaN = missing
    Vec log_ret;              // |assets|
    Vec simple_ret;           // |assets|
    Vec mcap;                 // |assets|, > 0
    Vec macro;                // n_macro
  };
  std::vector<MonthData> months;

  MonthId last_month() const { return first_month + static_cast<MonthId>(months.size()) - 1; }
  void validate() const;  // throws DataError
};

/// One month's prediction problem: features observable at the start of the
/// month (formation time t = month_id - 1), and the returns realized over it.
struct PanelSlice {
  MonthId month_id = -1;
  std::vector<int> assets;             // indices into RawPanel::asset_names
  std::vector<std::string> asset_names;
  Mat features;      // n x d with d = p (1 + q)
  Vec log_returns;   // n
  Vec simple_returns;// n
  Vec market_caps;   // n, formation-time caps
};

/// Cross-sectional rank transform of one raw column (NaN = missing):
/// non-missing values get average-tie ranks mapped by 2 rank/(1+n) - 1 into
/// (-1, 1); missing values become exactly 0 (the cross-sectional median of the
/// transformed values).
Vec rank_transform(const Vec& column);

/// Feature layout (z, z kron c), k-major: column p + k*q + l holds z_k * c_l.
Mat build_features(const Mat& chars, const Vec& macro);

/// Precomputes every buildable PanelSlice from a RawPanel: per-characteristic
/// publication lags with forward-fill, rank transform per month, macro
/// interactions. A slice for month m needs raw months back to m - 1 - 6, so
/// the first slice is first_month + 7.
class PanelStore {
 public:
  explicit PanelStore(const RawPanel& raw);

  MonthId first_slice() const { return first_slice_; }
  MonthId last_slice() const { return first_slice_ + static_cast<MonthId>(slices_.size()) - 1; }
  const PanelSlice& slice(MonthId m) const;  // throws DataError when out of range
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  MonthId first_slice_ = 0;
  std::vector<PanelSlice> slices_;
  std::vector<std::string> warnings_;
};

/// Clock-gated access to panel slices. Features (and other formation-time
/// fields) of slice m are readable iff m <= clock + 1; realized returns of
/// month m iff m <= clock. Every access is recorded, legal or not, and illegal
/// ones throw DataError — the audit trail for the no-look-ahead guarantee.
class PanelSource {
 public:
  struct Access {
    MonthId month;
    char field;     // 'f' features / 'a' assets / 'c' caps / 'r' log returns / 's' simple
    MonthId clock;  // clock at the time of the read
    bool ok;
  };

  explicit PanelSource(const PanelStore& store) : store_(&store) {}

  void set_clock(MonthId t) { clock_ = t; }
  MonthId clock() const { return clock_; }

  MonthId first_slice() const { return store_->first_slice(); }
  MonthId last_slice() const { return store_->last_slice(); }

  const Mat& features(MonthId m);
  const std::vector<int>& assets(MonthId m);
  const std::vector<std::string>& asset_names(MonthId m);
  const Vec& market_caps(MonthId m);
  const Vec& log_returns(MonthId m);
  const Vec& simple_returns(MonthId m);

  const std::vector<Access>& access_log() const { return log_; }
  void clear_log() { log_.clear(); }

 private:
  const PanelSlice& gated(MonthId m, char field);

  const PanelStore* store_;
  MonthId clock_ = std::numeric_limits<MonthId>::min() / 2;  // /2: clock_ + 1 must not overflow
  std::vector<Access> log_;
};

}  // namespace gpens
