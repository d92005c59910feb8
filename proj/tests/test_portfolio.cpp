#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <vector>

#include "gpens/portfolio.hpp"
#include "gpens/simplex_qp.hpp"
#include "gpens/types.hpp"
#include "oracles.hpp"

using namespace gpens;

namespace {

Mat random_psd(Rng& rng, int n, double scale) {
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
  Mat S = scale * (A * A.transpose()) / n;
  S.diagonal().array() += 0.1 * scale;
  return S;
}

}  // namespace

TEST_CASE("simplex projection hand cases") {
  Vec v(3);
  v << 0.2, 0.3, 0.5;  // already on the simplex
  CHECK((project_simplex(v) - v).cwiseAbs().maxCoeff() < 1e-15);

  Vec u(2);
  u << 10.0, 0.0;  // far outside: snaps to a vertex
  Vec pu = project_simplex(u);
  CHECK(pu(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pu(1) == doctest::Approx(0.0).epsilon(1e-15));

  Vec w(3);
  w << 1.0, 1.0, 1.0;  // symmetric: uniform
  Vec pw = project_simplex(w);
  for (int i = 0; i < 3; ++i) CHECK(pw(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  // Worked example: project (0.5, 0.2, -0.1). All coordinates stay active,
  // tau = (0.6 - 1)/3 = -2/15, so w = v + 2/15.
  Vec x(3);
  x << 0.5, 0.2, -0.1;
  Vec px = project_simplex(x);
  CHECK(px(0) == doctest::Approx(19.0 / 30.0).epsilon(1e-12));
  CHECK(px(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(px(2) == doctest::Approx(1.0 / 30.0).epsilon(1e-12));

  // And one where a coordinate genuinely drops: (1.0, 0.5, -0.5).
  // Active set {1, 2}: tau = 0.25, w = (0.75, 0.25, 0).
  Vec y2(3);
  y2 << 1.0, 0.5, -0.5;
  Vec py = project_simplex(y2);
  CHECK(py(0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(py(1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(py(2) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(project_simplex(Vec(0)), std::invalid_argument);
}

TEST_CASE("projection properties on random inputs") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(rng.uniform() * 12);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = 4.0 * rng.normal();
    Vec p = project_simplex(v);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    // Projection is the closest simplex point; compare against a sampled soup.
    const double d_star = (p - v).squaredNorm();
    for (int s = 0; s < 20; ++s) {
      Vec q(n);
      double tot = 0.0;
      for (int i = 0; i < n; ++i) {
        q(i) = rng.uniform();
        tot += q(i);
      }
      q /= tot;
      CHECK((q - v).squaredNorm() >= d_star - 1e-10);
    }
  }
}

TEST_CASE("simplex QP meets its KKT certificate and beats a fine grid") {
  Rng rng(5);
  for (int t = 0; t < 12; ++t) {
    Mat Q = random_psd(rng, 3, 1.0);
    Vec b(3);
    for (int i = 0; i < 3; ++i) b(i) = rng.normal();
    SimplexQPResult res = solve_simplex_qp(Q, b);
    CHECK(res.converged);
    CHECK(res.kkt_residual < 1e-8);
    CHECK(res.w.minCoeff() >= 0.0);
    CHECK(res.w.sum() == doctest::Approx(1.0).epsilon(1e-10));

    Vec w_grid = oracle::grid_qp_3(Q, b, 100);
    CHECK(oracle::qp_objective(Q, b, res.w) <=
          oracle::qp_objective(Q, b, w_grid) + 1e-6);
  }
}

TEST_CASE("QP degenerate cases") {
  // Zero Q: linear program; vertex at argmax b.
  Mat Q0 = Mat::Zero(3, 3);
  Vec b(3);
  b << 0.1, 0.7, 0.3;
  SimplexQPResult lin = solve_simplex_qp(Q0, b);
  CHECK(lin.w(1) == doctest::Approx(1.0).epsilon(1e-12));

  // Zero Q, constant b: uniform.
  Vec bc = Vec::Constant(4, 0.2);
  SimplexQPResult unif = solve_simplex_qp(Mat::Zero(4, 4), bc);
  for (int i = 0; i < 4; ++i) CHECK(unif.w(i) == doctest::Approx(0.25).epsilon(1e-12));

  // One asset: the only feasible point.
  SimplexQPResult one = solve_simplex_qp(Mat::Constant(1, 1, 2.0), Vec::Constant(1, -1.0));
  CHECK(one.w(0) == 1.0);

  CHECK_THROWS_AS(solve_simplex_qp(Mat::Zero(2, 3), Vec::Zero(2)), std::invalid_argument);
}

TEST_CASE("minimum-uncertainty weights: diagonal closed form") {
  // For diagonal Sigma the solution is inverse-variance weighting.
  Vec d(4);
  d << 0.1, 0.2, 0.4, 0.8;
  Mat Sigma = d.asDiagonal();
  Vec w = uw_weights(Sigma);
  const double norm = (1 / 0.1) + (1 / 0.2) + (1 / 0.4) + (1 / 0.8);
  for (int i = 0; i < 4; ++i)
    CHECK(w(i) == doctest::Approx((1.0 / d(i)) / norm).epsilon(1e-10));
}

TEST_CASE("ew and vw weights") {
  Vec ew = ew_weights(5);
  for (int i = 0; i < 5; ++i) CHECK(ew(i) == 0.2);
  CHECK_THROWS_AS(ew_weights(0), std::invalid_argument);

  Vec caps(3);
  caps << 1.0, 2.0, 7.0;
  Vec vw = vw_weights(caps);
  CHECK(vw(0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(vw(1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(vw(2) == doctest::Approx(0.7).epsilon(1e-15));
  Vec bad(2);
  bad << 1.0, -1.0;
  CHECK_THROWS_AS(vw_weights(bad), std::invalid_argument);
}

TEST_CASE("level adjustment orients extremeness upward in both halves") {
  Vec preds(3);
  preds << 0.01, 0.03, 0.02;
  Vec top = level_adjusted(preds, true);  // distance above the decile minimum
  CHECK(top(0) == doctest::Approx(0.00).epsilon(1e-15));
  CHECK(top(1) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(top(2) == doctest::Approx(0.01).epsilon(1e-15));

  Vec bot = level_adjusted(preds, false);  // distance below the decile maximum
  CHECK(bot(0) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(bot(1) == doctest::Approx(0.00).epsilon(1e-15));
  CHECK(bot(2) == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("prediction weighting normalizes and falls back on constants") {
  Vec s(3);
  s << 1.0, 3.0, 1.0;
  bool fell = true;
  Vec w = pw_weights(s, &fell);
  CHECK(!fell);
  CHECK(w(0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(w(1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(w(2) == doctest::Approx(0.2).epsilon(1e-15));

  Vec zero = Vec::Zero(4);
  Vec wz = pw_weights(zero, &fell);
  CHECK(fell);
  for (int i = 0; i < 4; ++i) CHECK(wz(i) == 0.25);
}

TEST_CASE("mean-variance weights maximize the stated objective") {
  Rng rng(7);
  const double gamma = 3.0;
  for (int t = 0; t < 10; ++t) {
    const int n = 3;
    Mat Sigma = random_psd(rng, n, 0.01);
    Vec s(n);
    for (int i = 0; i < n; ++i) s(i) = 0.01 * rng.normal();
    Vec w = puw_weights(s, Sigma, gamma);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-10));
    const double f_star = w.dot(s) - 0.5 * gamma * w.dot(Sigma * w);
    // No grid point does better.
    Vec wg = oracle::grid_qp_3(Mat(gamma * Sigma), s, 100);
    const double f_grid = wg.dot(s) - 0.5 * gamma * wg.dot(Sigma * wg);
    CHECK(f_star >= f_grid - 1e-6);
  }
}

TEST_CASE("month weights: structure, decile membership, and strategy invariants") {
  Rng rng(11);
  const int n = 45;
  Vec pred(n), caps(n);
  for (int i = 0; i < n; ++i) {
    pred(i) = 0.02 * rng.normal();
    caps(i) = 1.0 + rng.uniform() * 9.0;
  }
  Mat Sigma = random_psd(rng, n, 0.0004);
  PortfolioConfig cfg;
  cfg.gamma = 2.0;

  MonthWeights mw = build_month_weights(12, pred, Sigma, caps, cfg);
  CHECK(mw.month == 12);
  REQUIRE(static_cast<int>(mw.decile.size()) == n);

  int total = 0;
  for (int d = 0; d < 10; ++d) {
    const auto& mem = mw.members[static_cast<size_t>(d)];
    total += static_cast<int>(mem.size());
    for (size_t k = 1; k < mem.size(); ++k) CHECK(mem[k] > mem[k - 1]);
    for (int a : mem) CHECK(mw.decile[static_cast<size_t>(a)] == d);

    const auto ns = static_cast<Eigen::Index>(mem.size());
    for (int s = 0; s < kNumStrategies; ++s) {
      const Vec& w = mw.w[static_cast<size_t>(s)][static_cast<size_t>(d)];
      REQUIRE(w.size() == ns);
      CHECK(w.minCoeff() >= 0.0);
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }

    // EW and VW against their closed forms on the members.
    const Vec& ew = mw.w[static_cast<size_t>(Strategy::EW)][static_cast<size_t>(d)];
    for (Eigen::Index i = 0; i < ns; ++i)
      CHECK(ew(i) == doctest::Approx(1.0 / static_cast<double>(ns)).epsilon(1e-15));
    const Vec& vw = mw.w[static_cast<size_t>(Strategy::VW)][static_cast<size_t>(d)];
    double cap_sum = 0.0;
    for (int a : mem) cap_sum += caps(a);
    for (Eigen::Index i = 0; i < ns; ++i)
      CHECK(vw(i) == doctest::Approx(caps(mem[static_cast<size_t>(i)]) / cap_sum)
                         .epsilon(1e-12));
  }
  CHECK(total == n);

  // The PUW objective dominates the other strategies' objectives per decile.
  for (int d = 0; d < 10; ++d) {
    const auto& mem = mw.members[static_cast<size_t>(d)];
    const auto ns = static_cast<Eigen::Index>(mem.size());
    Vec pd(ns);
    Mat Sd(ns, ns);
    for (Eigen::Index i = 0; i < ns; ++i) {
      pd(i) = pred(mem[static_cast<size_t>(i)]);
      for (Eigen::Index j = 0; j < ns; ++j)
        Sd(i, j) = Sigma(mem[static_cast<size_t>(i)], mem[static_cast<size_t>(j)]);
    }
    Vec s_hat = level_adjusted(pd, d >= 5);
    auto objective = [&](const Vec& w) {
      return w.dot(s_hat) - 0.5 * cfg.gamma * w.dot(Sd * w);
    };
    const double f_puw = objective(mw.w[static_cast<size_t>(Strategy::PUW)][static_cast<size_t>(d)]);
    for (int s = 0; s < kNumStrategies; ++s)
      CHECK(f_puw >= objective(mw.w[static_cast<size_t>(s)][static_cast<size_t>(d)]) - 1e-10);
  }
}

TEST_CASE("full-matrix and per-block construction agree") {
  Rng rng(13);
  const int n = 38;
  Vec pred(n), caps(n);
  for (int i = 0; i < n; ++i) {
    pred(i) = 0.02 * rng.normal();
    caps(i) = 1.0 + rng.uniform() * 5.0;
  }
  Mat Sigma = random_psd(rng, n, 0.0004);
  PortfolioConfig cfg;
  cfg.gamma = 1.5;

  MonthWeights full = build_month_weights(3, pred, Sigma, caps, cfg);

  std::array<Mat, 10> blocks;
  for (int d = 0; d < 10; ++d) {
    const auto& mem = full.members[static_cast<size_t>(d)];
    const auto ns = static_cast<Eigen::Index>(mem.size());
    blocks[static_cast<size_t>(d)] = Mat(ns, ns);
    for (Eigen::Index i = 0; i < ns; ++i)
      for (Eigen::Index j = 0; j < ns; ++j)
        blocks[static_cast<size_t>(d)](i, j) =
            Sigma(mem[static_cast<size_t>(i)], mem[static_cast<size_t>(j)]);
  }
  MonthWeights from_blocks = build_month_weights_blocks(3, pred, blocks, caps, cfg);

  CHECK(from_blocks.decile == full.decile);
  for (int s = 0; s < kNumStrategies; ++s)
    for (int d = 0; d < 10; ++d) {
      const Vec& a = full.w[static_cast<size_t>(s)][static_cast<size_t>(d)];
      const Vec& b = from_blocks.w[static_cast<size_t>(s)][static_cast<size_t>(d)];
      REQUIRE(a.size() == b.size());
      CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
      CHECK(from_blocks.pw_fallback[static_cast<size_t>(s)][static_cast<size_t>(d)] ==
            full.pw_fallback[static_cast<size_t>(s)][static_cast<size_t>(d)]);
    }

  // Mismatched block dimensions are rejected.
  blocks[0] = Mat::Zero(1, 1);
  CHECK_THROWS_AS(build_month_weights_blocks(3, pred, blocks, caps, cfg),
                  std::invalid_argument);
}

TEST_CASE("diagonal-covariance mode uses only the diagonal") {
  Rng rng(17);
  const int n = 30;
  Vec pred(n), caps(n);
  for (int i = 0; i < n; ++i) {
    pred(i) = 0.02 * rng.normal();
    caps(i) = 1.0 + rng.uniform();
  }
  Mat Sigma = random_psd(rng, n, 0.0004);
  Mat diag_only = Mat(Vec(Sigma.diagonal()).asDiagonal());

  PortfolioConfig cfg;
  cfg.diag_cov = true;
  MonthWeights a = build_month_weights(1, pred, Sigma, caps, cfg);
  MonthWeights b = build_month_weights(1, pred, diag_only, caps, cfg);
  for (int s = 0; s < kNumStrategies; ++s)
    for (int d = 0; d < 10; ++d)
      CHECK((a.w[static_cast<size_t>(s)][static_cast<size_t>(d)] -
             b.w[static_cast<size_t>(s)][static_cast<size_t>(d)])
                .cwiseAbs()
                .maxCoeff() == 0.0);
}

TEST_CASE("series evaluation and cumulative log returns") {
  std::vector<double> r = {0.01, -0.02, 0.03, 0.005};
  StrategyStats st = evaluate_series(r);
  const double mean = (0.01 - 0.02 + 0.03 + 0.005) / 4.0;
  double ss = 0.0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / 3.0);
  CHECK(st.ann_mean == doctest::Approx(12.0 * mean).epsilon(1e-12));
  CHECK(st.ann_sd == doctest::Approx(std::sqrt(12.0) * sd).epsilon(1e-12));
  CHECK(st.sharpe == doctest::Approx(12.0 * mean / (std::sqrt(12.0) * sd)).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_series({0.01}), UndefinedMetricError);
  CHECK_THROWS_AS(evaluate_series({0.01, 0.01, 0.01}), UndefinedMetricError);

  std::vector<double> cl = cumulative_log(r);
  REQUIRE(cl.size() == r.size());
  double acc = 0.0;
  for (size_t i = 0; i < r.size(); ++i) {
    acc += std::log1p(r[i]);
    CHECK(cl[i] == doctest::Approx(acc).epsilon(1e-15));
  }
  CHECK_THROWS_AS(cumulative_log({-1.0}), UndefinedMetricError);
}

TEST_CASE("strategy names round-trip") {
  for (int s = 0; s < kNumStrategies; ++s) {
    const Strategy st = static_cast<Strategy>(s);
    CHECK(parse_strategy(strategy_name(st)) == st);
  }
  CHECK_THROWS_AS(parse_strategy("mystery"), ConfigError);
}
