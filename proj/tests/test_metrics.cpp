#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "gpens/metrics.hpp"
#include "gpens/types.hpp"
#include "oracles.hpp"

using namespace gpens;

namespace {

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<PanelObs> random_obs(uint64_t stream, int months, int n_lo, int n_hi) {
  Rng rng(stream);
  std::vector<PanelObs> obs;
  for (int t = 0; t < months; ++t) {
    const int n = n_lo + static_cast<int>(rng.uniform() * (n_hi - n_lo + 1));
    PanelObs o;
    o.month = t + 10;
    o.pred = Vec(n);
    o.real = Vec(n);
    for (int i = 0; i < n; ++i) {
      o.pred(i) = rng.normal();
      o.real(i) = 0.3 * o.pred(i) + rng.normal();
    }
    obs.push_back(std::move(o));
  }
  return obs;
}

}  // namespace

TEST_CASE("pooled R2 matches the scalar reference") {
  auto obs = random_obs(11, 7, 5, 40);
  CHECK(std::abs(r2_pool(obs) - oracle::pooled_r2(obs)) < 1e-10);
}

TEST_CASE("pooled R2 hand value") {
  PanelObs o;
  o.month = 1;
  o.pred = Vec(2);
  o.real = Vec(2);
  o.pred << 1.0, 0.0;
  o.real << 2.0, 2.0;
  // SSE = 1 + 4 = 5, SST = 8, R2 = 1 - 5/8.
  CHECK(r2_pool({o}) == doctest::Approx(1.0 - 5.0 / 8.0).epsilon(1e-15));
}

TEST_CASE("pooled R2 undefined on all-zero realizations") {
  PanelObs o;
  o.month = 1;
  o.pred = Vec::Constant(3, 0.5);
  o.real = Vec::Zero(3);
  CHECK_THROWS_AS(r2_pool({o}), UndefinedMetricError);
  // No observations at all is a caller bug, not an undefined statistic.
  CHECK_THROWS_AS(r2_pool({}), std::invalid_argument);
}

TEST_CASE("average monthly R2 matches the scalar reference and excludes zero months") {
  auto obs = random_obs(13, 9, 4, 30);
  CHECK(std::abs(r2_avg(obs) - oracle::mean_monthly_r2(obs)) < 1e-10);

  // Append a month with zero realizations: excluded, average unchanged.
  PanelObs z;
  z.month = 99;
  z.pred = Vec::Constant(4, 0.1);
  z.real = Vec::Zero(4);
  auto obs2 = obs;
  obs2.push_back(z);
  std::vector<MonthId> excluded;
  CHECK(r2_avg(obs2, &excluded) == doctest::Approx(r2_avg(obs)).epsilon(1e-15));
  REQUIRE(excluded.size() == 1);
  CHECK(excluded[0] == 99);
}

TEST_CASE("spearman matches the scalar reference with ties") {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const int n = 5 + static_cast<int>(rng.uniform() * 30);
    Vec a(n), b(n);
    for (int i = 0; i < n; ++i) {
      // Coarse rounding manufactures ties in both series.
      a(i) = std::round(rng.normal() * 3.0) / 3.0;
      b(i) = std::round((0.5 * a(i) + rng.normal()) * 3.0) / 3.0;
    }
    if (std::abs(a(0) - a(1)) < 1e-12 && n < 7) continue;  // skip near-constant draws
    double want;
    try {
      want = oracle::spearman_rho(to_std(a), to_std(b));
    } catch (...) {
      continue;
    }
    CHECK(spearman(a, b) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("spearman equals the classical no-ties formula") {
  Rng rng(19);
  const int n = 15;
  Vec a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  // Ranks by sorting indices (no ties with continuous draws).
  auto ranks = [&](const Vec& v) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return v(x) < v(y); });
    Vec r(n);
    for (int i = 0; i < n; ++i) r(idx[static_cast<size_t>(i)]) = i + 1;
    return r;
  };
  Vec ra = ranks(a), rb = ranks(b);
  double d2 = 0.0;
  for (int i = 0; i < n; ++i) d2 += (ra(i) - rb(i)) * (ra(i) - rb(i));
  const double classical = 1.0 - 6.0 * d2 / (n * (static_cast<double>(n) * n - 1.0));
  CHECK(spearman(a, b) == doctest::Approx(classical).epsilon(1e-12));
}

TEST_CASE("spearman is exactly 1 on monotone data and rejects degenerate input") {
  Vec a(4), b(4);
  a << 1, 2, 3, 4;
  b << 10, 20, 30, 40;
  CHECK(spearman(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  Vec c(4);
  c << 40, 30, 20, 10;
  CHECK(spearman(a, c) == doctest::Approx(-1.0).epsilon(1e-15));

  Vec d = Vec::Constant(4, 2.0);
  CHECK_THROWS_AS(spearman(a, d), UndefinedMetricError);
  Vec e(1), f(1);
  e << 1.0;
  f << 2.0;
  CHECK_THROWS_AS(spearman(e, f), UndefinedMetricError);
  Vec g(3);
  g << 1, 2, 3;
  CHECK_THROWS_AS(spearman(a, g), std::invalid_argument);  // length mismatch
}

TEST_CASE("information coefficient aggregates monthly spearman") {
  auto obs = random_obs(23, 8, 6, 25);
  ICResult res = information_coefficient(obs);
  REQUIRE(res.monthly.size() == obs.size());
  double sum = 0.0;
  int defined = 0;
  for (size_t t = 0; t < obs.size(); ++t) {
    const auto& m = res.monthly[t];
    CHECK(m.month_id == obs[t].month);
    CHECK(m.n == obs[t].pred.size());
    if (m.rho_defined) {
      CHECK(m.rho_t == doctest::Approx(oracle::spearman_rho(to_std(obs[t].pred), to_std(obs[t].real)))
                           .epsilon(1e-10));
      sum += m.rho_t;
      ++defined;
    }
  }
  CHECK(res.ic == doctest::Approx(sum / defined).epsilon(1e-12));

  // t statistic: mean / (sd / sqrt(T)) over the defined monthly values.
  REQUIRE(res.tstat.has_value());
  double mean = sum / defined, ss = 0.0;
  for (const auto& m : res.monthly)
    if (m.rho_defined) ss += (m.rho_t - mean) * (m.rho_t - mean);
  const double sd = std::sqrt(ss / (defined - 1));
  CHECK(*res.tstat == doctest::Approx(mean / (sd / std::sqrt(defined))).epsilon(1e-10));
}

TEST_CASE("information coefficient flags undefined months") {
  PanelObs good;
  good.month = 1;
  good.pred = Vec(5);
  good.real = Vec(5);
  good.pred << 1, 2, 3, 4, 5;
  good.real << 2, 1, 4, 3, 5;
  PanelObs flat;
  flat.month = 2;
  flat.pred = Vec::Constant(5, 1.0);  // constant predictions: rho undefined
  flat.real = good.real;
  ICResult res = information_coefficient({good, flat});
  CHECK(res.monthly[0].rho_defined);
  CHECK(!res.monthly[1].rho_defined);
  REQUIRE(res.excluded.size() == 1);
  CHECK(res.excluded[0] == 2);
  CHECK(res.ic == doctest::Approx(res.monthly[0].rho_t).epsilon(1e-15));
  CHECK(!res.tstat.has_value());  // a single defined month has no t statistic
}

TEST_CASE("OLS matches the scalar reference and a known line") {
  Rng rng(29);
  const int n = 40;
  Vec x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x(i) = rng.normal();
    y(i) = 2.0 * x(i) + 1.0 + 0.1 * rng.normal();
  }
  OLSResult got = ols_simple(y, x);
  oracle::SimpleOLS want = oracle::ols(to_std(y), to_std(x));
  CHECK(got.slope == doctest::Approx(want.slope).epsilon(1e-10));
  CHECK(got.intercept == doctest::Approx(want.intercept).epsilon(1e-10));
  CHECK(got.se_slope == doctest::Approx(want.se_slope).epsilon(1e-10));
  CHECK(got.se_intercept == doctest::Approx(want.se_intercept).epsilon(1e-10));
  CHECK(got.n == n);

  // Exact line: slope and intercept recovered exactly, zero residual SEs.
  Vec ye = 2.0 * x.array() + 1.0;
  OLSResult exact = ols_simple(ye, x);
  CHECK(exact.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(exact.intercept == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact.se_slope < 1e-6);

  Vec flat = Vec::Constant(n, 1.0);
  CHECK_THROWS_AS(ols_simple(y, flat), UndefinedMetricError);
  Vec tiny(2), tiny2(2);
  tiny << 1, 2;
  tiny2 << 3, 4;
  CHECK_THROWS_AS(ols_simple(tiny, tiny2), UndefinedMetricError);
}

TEST_CASE("decile assignment: sizes and stable ties") {
  // n = 25: base size 2, remainder 5 goes to the top five deciles.
  Vec v(25);
  for (int i = 0; i < 25; ++i) v(i) = i;
  std::vector<int> d = assign_deciles(v);
  std::vector<int> count(10, 0);
  for (int i = 0; i < 25; ++i) {
    ++count[static_cast<size_t>(d[static_cast<size_t>(i)])];
    if (i > 0) CHECK(d[static_cast<size_t>(i)] >= d[static_cast<size_t>(i - 1)]);
  }
  for (int k = 0; k < 5; ++k) CHECK(count[static_cast<size_t>(k)] == 2);
  for (int k = 5; k < 10; ++k) CHECK(count[static_cast<size_t>(k)] == 3);

  // All-equal values: ties broken by original index, so labels are
  // non-decreasing in input order with the same size profile.
  Vec ties = Vec::Constant(25, 1.0);
  std::vector<int> dt = assign_deciles(ties);
  for (int i = 1; i < 25; ++i)
    CHECK(dt[static_cast<size_t>(i)] >= dt[static_cast<size_t>(i - 1)]);
  std::vector<int> count2(10, 0);
  for (int i = 0; i < 25; ++i) ++count2[static_cast<size_t>(dt[static_cast<size_t>(i)])];
  CHECK(count2 == count);

  // n < 10 is legal: empty deciles surface downstream when a consumer needs
  // every bucket populated. Remainder-from-the-top puts 3 names in D8..D10.
  Vec three(3);
  three << 2.0, 1.0, 3.0;
  std::vector<int> d3 = assign_deciles(three);
  CHECK(d3[0] == 8);
  CHECK(d3[1] == 7);
  CHECK(d3[2] == 9);

  CHECK_THROWS_AS(assign_deciles(Vec(0)), std::invalid_argument);
}

TEST_CASE("decile assignment follows value order") {
  Rng rng(31);
  Vec v(40);
  for (int i = 0; i < 40; ++i) v(i) = rng.normal();
  std::vector<int> d = assign_deciles(v);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j)
      if (v(i) < v(j)) CHECK(d[static_cast<size_t>(i)] <= d[static_cast<size_t>(j)]);
}

TEST_CASE("decile copula columns sum to 0.1 when n is a multiple of 10") {
  Rng rng(37);
  std::vector<std::pair<Vec, Vec>> months;
  for (int t = 0; t < 4; ++t) {
    Vec a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a(i) = rng.normal();
      b(i) = 0.5 * a(i) + rng.normal();
    }
    months.emplace_back(a, b);
  }
  Mat C = decile_copula(months);
  REQUIRE(C.rows() == 10);
  REQUIRE(C.cols() == 10);
  for (int j = 0; j < 10; ++j) {
    CHECK(C.col(j).sum() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(C.row(j).sum() == doctest::Approx(0.1).epsilon(1e-12));
  }
  CHECK(C.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("decile copula of a series with itself is 0.1 on the diagonal") {
  Rng rng(41);
  Vec a(50);
  for (int i = 0; i < 50; ++i) a(i) = rng.normal();
  Mat C = decile_copula({{a, a}});
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      CHECK(C(i, j) == doctest::Approx(i == j ? 0.1 : 0.0).epsilon(1e-15));
}

TEST_CASE("copula degenerate inputs") {
  CHECK_THROWS_AS(decile_copula({}), std::invalid_argument);
  // Months smaller than 10 names still produce a table; total mass stays 1.
  Vec small(5);
  small << 1, 2, 3, 4, 5;
  Mat C = decile_copula({{small, small}});
  CHECK(C.sum() == doctest::Approx(1.0).epsilon(1e-12));
}
