#include "gpens/panel.hpp"

#include <algorithm>
#include <cmath>

#include "gpens/ranks.hpp"

namespace gpens {

Frequency parse_frequency(const std::string& s) {
  if (s == "monthly") return Frequency::Monthly;
  if (s == "quarterly") return Frequency::Quarterly;
  if (s == "annual") return Frequency::Annual;
  throw ConfigError("unknown frequency tag '" + s + "' (expected monthly|quarterly|annual)");
}

std::string frequency_name(Frequency f) {
  switch (f) {
    case Frequency::Monthly: return "monthly";
    case Frequency::Quarterly: return "quarterly";
    case Frequency::Annual: return "annual";
  }
  throw ConfigError("unknown characteristic frequency");
}

void RawPanel::validate() const {
  if (months.empty()) throw DataError("panel: no months");
  if (n_chars < 1) throw DataError("panel: need at least one characteristic");
  if (n_macro < 0) throw DataError("panel: negative macro count");
  if (static_cast<int>(char_freq.size()) != n_chars)
    throw DataError("panel: frequency tags do not cover every characteristic");
  for (size_t mi = 0; mi < months.size(); ++mi) {
    const auto& md = months[mi];
    const MonthId m = first_month + static_cast<MonthId>(mi);
    const auto n = static_cast<Eigen::Index>(md.assets.size());
    if (md.chars.rows() != n || md.chars.cols() != n_chars || md.log_ret.size() != n ||
        md.simple_ret.size() != n || md.mcap.size() != n)
      throw DataError("panel: misaligned data in month " + std::to_string(m));
    if (md.macro.size() != n_macro)
      throw DataError("panel: macro vector has wrong length in month " + std::to_string(m));
    for (size_t i = 1; i < md.assets.size(); ++i)
      if (md.assets[i] <= md.assets[i - 1])
        throw DataError("panel: duplicate or unsorted asset ids in month " + std::to_string(m));
    for (int a : md.assets)
      if (a < 0 || a >= static_cast<int>(asset_names.size()))
        throw DataError("panel: asset index out of range in month " + std::to_string(m));
    if (!md.log_ret.allFinite() || !md.simple_ret.allFinite())
      throw DataError("panel: non-finite return in month " + std::to_string(m));
    if (!md.macro.allFinite())
      throw DataError("panel: non-finite macro value in month " + std::to_string(m));
    if ((md.mcap.array() <= 0.0).any() || !md.mcap.allFinite())
      throw DataError("panel: market caps must be positive and finite in month " +
                      std::to_string(m));
  }
}

Vec rank_transform(const Vec& column) {
  const Eigen::Index n = column.size();
  if (n < 1) throw std::invalid_argument("rank_transform: empty column");
  std::vector<Eigen::Index> present;
  present.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isnan(column(i))) present.push_back(i);
  Vec out = Vec::Zero(n);
  if (present.empty()) return out;  // all-missing: imputed to the zero median
  Vec vals(static_cast<Eigen::Index>(present.size()));
  for (size_t k = 0; k < present.size(); ++k) vals(static_cast<Eigen::Index>(k)) = column(present[k]);
  const Vec ranks = average_ranks(vals);
  const double denom = 1.0 + static_cast<double>(present.size());
  for (size_t k = 0; k < present.size(); ++k)
    out(present[k]) = 2.0 * ranks(static_cast<Eigen::Index>(k)) / denom - 1.0;
  return out;
}

Mat build_features(const Mat& chars, const Vec& macro) {
  const Eigen::Index n = chars.rows(), p = chars.cols(), q = macro.size();
  if (n < 1 || p < 1) throw std::invalid_argument("build_features: empty characteristics");
  Mat out(n, p * (1 + q));
  out.leftCols(p) = chars;
  for (Eigen::Index k = 0; k < p; ++k)
    for (Eigen::Index l = 0; l < q; ++l) out.col(p + k * q + l) = chars.col(k) * macro(l);
  return out;
}

namespace {
constexpr int kMaxLag = 6;  // annual publication lag bounds the history we need
}

PanelStore::PanelStore(const RawPanel& raw) {
  raw.validate();
  const int n_all = static_cast<int>(raw.asset_names.size());
  const int p = raw.n_chars;
  const int n_months = static_cast<int>(raw.months.size());
  if (n_months < kMaxLag + 2)
    throw DataError("panel: need at least " + std::to_string(kMaxLag + 2) +
                    " months of raw data to build one slice");

  // ff[mi](a, k): last non-missing value of characteristic k for asset a
  // released at raw month index <= mi (NaN if never released).
  std::vector<Mat> ff(static_cast<size_t>(n_months));
  Mat last = Mat::Constant(n_all, p, std::numeric_limits<double>::quiet_NaN());
  for (int mi = 0; mi < n_months; ++mi) {
    const auto& md = raw.months[static_cast<size_t>(mi)];
    for (size_t r = 0; r < md.assets.size(); ++r) {
      for (int k = 0; k < p; ++k) {
        const double v = md.chars(static_cast<Eigen::Index>(r), k);
        if (!std::isnan(v)) last(md.assets[r], k) = v;
      }
    }
    ff[static_cast<size_t>(mi)] = last;
  }

  // position of each asset within a month's record block, -1 when absent
  std::vector<std::vector<int>> pos(static_cast<size_t>(n_months),
                                    std::vector<int>(static_cast<size_t>(n_all), -1));
  for (int mi = 0; mi < n_months; ++mi) {
    const auto& md = raw.months[static_cast<size_t>(mi)];
    for (size_t r = 0; r < md.assets.size(); ++r)
      pos[static_cast<size_t>(mi)][static_cast<size_t>(md.assets[r])] = static_cast<int>(r);
  }

  first_slice_ = raw.first_month + kMaxLag + 1;
  for (int mi = kMaxLag + 1; mi < n_months; ++mi) {
    const MonthId m = raw.first_month + mi;
    const int t = mi - 1;  // formation month index
    const auto& ret_md = raw.months[static_cast<size_t>(mi)];
    const auto& frm_md = raw.months[static_cast<size_t>(t)];

    PanelSlice s;
    s.month_id = m;
    for (int a : ret_md.assets)
      if (pos[static_cast<size_t>(t)][static_cast<size_t>(a)] >= 0) s.assets.push_back(a);
    const auto n = static_cast<Eigen::Index>(s.assets.size());
    if (n == 0) throw DataError("panel: empty cross-section in month " + std::to_string(m));

    Mat z_raw(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = s.assets[static_cast<size_t>(i)];
      s.asset_names.push_back(raw.asset_names[static_cast<size_t>(a)]);
      for (int k = 0; k < p; ++k) {
        const int src = t - lag_months(raw.char_freq[static_cast<size_t>(k)]);
        z_raw(i, k) = ff[static_cast<size_t>(src)](a, k);
      }
    }
    Mat z(n, p);
    for (int k = 0; k < p; ++k) {
      const Vec col = z_raw.col(k);
      if ((col.array().isNaN()).all())
        warnings_.push_back("month " + std::to_string(m) + ": characteristic " +
                            std::to_string(k + 1) + " is all-missing; imputed to 0");
      z.col(k) = rank_transform(col);
    }
    s.features = build_features(z, frm_md.macro);

    s.log_returns.resize(n);
    s.simple_returns.resize(n);
    s.market_caps.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = s.assets[static_cast<size_t>(i)];
      const int rr = pos[static_cast<size_t>(mi)][static_cast<size_t>(a)];
      const int rf = pos[static_cast<size_t>(t)][static_cast<size_t>(a)];
      s.log_returns(i) = ret_md.log_ret(rr);
      s.simple_returns(i) = ret_md.simple_ret(rr);
      s.market_caps(i) = frm_md.mcap(rf);
    }
    slices_.push_back(std::move(s));
  }
}

const PanelSlice& PanelStore::slice(MonthId m) const {
  if (m < first_slice_ || m > last_slice())
    throw DataError("panel: no slice for month " + std::to_string(m) + " (available " +
                    std::to_string(first_slice_) + ".." + std::to_string(last_slice()) + ")");
  return slices_[static_cast<size_t>(m - first_slice_)];
}

const PanelSlice& PanelSource::gated(MonthId m, char field) {
  const bool formation = (field == 'f' || field == 'a' || field == 'c');
  const MonthId horizon = formation ? clock_ + 1 : clock_;
  const bool ok = m <= horizon;
  log_.push_back({m, field, clock_, ok});
  if (!ok)
    throw DataError("look-ahead: read of month " + std::to_string(m) + " field '" +
                    std::string(1, field) + "' with clock at " + std::to_string(clock_));
  return store_->slice(m);
}

const Mat& PanelSource::features(MonthId m) { return gated(m, 'f').features; }
const std::vector<int>& PanelSource::assets(MonthId m) { return gated(m, 'a').assets; }
const std::vector<std::string>& PanelSource::asset_names(MonthId m) {
  return gated(m, 'a').asset_names;
}
const Vec& PanelSource::market_caps(MonthId m) { return gated(m, 'c').market_caps; }
const Vec& PanelSource::log_returns(MonthId m) { return gated(m, 'r').log_returns; }
const Vec& PanelSource::simple_returns(MonthId m) { return gated(m, 's').simple_returns; }

}  // namespace gpens
