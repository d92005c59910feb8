#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "gpens/ensemble.hpp"
#include "gpens/gp.hpp"
#include "gpens/types.hpp"
#include "oracles.hpp"

using namespace gpens;

namespace {

// A tiny fitted model with hand-picked params; the fit itself is irrelevant,
// only that predictions are well defined.
FittedGP make_model(uint64_t stream, MonthId month, int n = 14, int d = 2) {
  Rng rng(stream);
  TrainingSet ts;
  ts.features = Mat(n, d);
  ts.targets = Vec(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ts.features(i, j) = 2.0 * rng.uniform() - 1.0;
    ts.targets(i) = 0.2 * rng.normal();
  }
  ts.month_id = month;
  KernelParams p;
  p.sigma = 0.3 + 0.4 * rng.uniform();
  p.alpha = 0.5 * rng.uniform();
  p.beta = 1.0 + 2.0 * rng.uniform();
  p.noise_var = 1e-10;
  return refit_at(p, ts);
}

Mat test_points(uint64_t stream, int m, int d = 2) {
  Rng rng(stream);
  Mat X(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = 2.0 * rng.uniform() - 1.0;
  return X;
}

}  // namespace

TEST_CASE("scheme names round-trip") {
  CHECK(std::string(weight_scheme_name(WeightScheme::Equal)) == "equal");
  CHECK(std::string(weight_scheme_name(WeightScheme::MSE)) == "mse");
  CHECK(parse_weight_scheme("equal") == WeightScheme::Equal);
  CHECK(parse_weight_scheme("mse") == WeightScheme::MSE);
  CHECK_THROWS_AS(parse_weight_scheme("softmax"), ConfigError);
}

TEST_CASE("equal weights") {
  MixingWeights w = equal_weights({3, 5, 9, 11});
  w.validate();
  CHECK(w.scheme == WeightScheme::Equal);
  CHECK(!w.calibration_month.has_value());
  CHECK(w.weights.size() == 4);
  for (const auto& [m, wi] : w.weights) CHECK(wi == 0.25);
  CHECK_THROWS_AS(equal_weights({}), std::invalid_argument);
}

TEST_CASE("two-component mixture moments, worked by hand") {
  // Components N(1, 0.1) and N(-1, 0.2), weights 1/2 each:
  //   mean = 0
  //   var  = 0.5*(0.1 + 1) + 0.5*(0.2 + 1) - 0 = 1.15
  std::map<MonthId, Vec> means;
  std::map<MonthId, Mat> covs;
  means[1] = Vec::Constant(1, 1.0);
  means[2] = Vec::Constant(1, -1.0);
  covs[1] = Mat::Constant(1, 1, 0.1);
  covs[2] = Mat::Constant(1, 1, 0.2);

  // Drive the real mix() through models whose predictions we overwrite is not
  // possible; instead verify the arithmetic through the Monte-Carlo oracle and
  // check mix() on real models against the same closed form below.
  std::vector<Vec> ms = {means[1], means[2]};
  std::vector<Mat> cs = {covs[1], covs[2]};
  std::vector<double> ws = {0.5, 0.5};
  oracle::MCMoments mc = oracle::mc_mixture_moments(ms, cs, ws, 2000000, 77);
  CHECK(std::abs(mc.mean(0) - 0.0) < 4.0 * mc.mean_se(0));
  CHECK(std::abs(mc.cov(0, 0) - 1.15) < 0.01);
}

TEST_CASE("mix matches closed-form mixture moments of its components") {
  ModelMap models;
  FittedGP m1 = make_model(101, 1);
  FittedGP m2 = make_model(102, 2);
  FittedGP m3 = make_model(103, 3);
  models[1] = &m1;
  models[2] = &m2;
  models[3] = &m3;
  Mat Xs = test_points(200, 6);

  MixingWeights w;
  w.scheme = WeightScheme::Equal;
  w.weights = {{1, 0.5}, {2, 0.3}, {3, 0.2}};

  MixturePrediction mp = mix(models, w, Xs);

  // Independent recomputation from the per-model posteriors.
  Vec mean = Vec::Zero(6);
  Mat second = Mat::Zero(6, 6);
  for (const auto& [mid, model] : models) {
    GPPrediction p = predict(*model, Xs);
    const double wi = w.weights.at(mid);
    mean += wi * p.mean;
    second += wi * (p.cov + p.mean * p.mean.transpose());
  }
  Mat cov = second - mean * mean.transpose();

  CHECK((mp.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((mp.cov - 0.5 * (cov + cov.transpose())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((mp.cov - mp.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);

  // And against the Monte-Carlo oracle, within 4 standard errors.
  std::vector<Vec> ms;
  std::vector<Mat> cs;
  std::vector<double> ws;
  for (const auto& [mid, model] : models) {
    GPPrediction p = predict(*model, Xs);
    ms.push_back(p.mean);
    cs.push_back(p.cov);
    ws.push_back(w.weights.at(mid));
  }
  oracle::MCMoments mc = oracle::mc_mixture_moments(ms, cs, ws, 400000, 404);
  CHECK((mc.mean - mp.mean).cwiseAbs().maxCoeff() < 4.0 * mc.mean_se.maxCoeff());
}

TEST_CASE("mix_mean equals the mean of mix bitwise") {
  ModelMap models;
  FittedGP m1 = make_model(111, 4);
  FittedGP m2 = make_model(112, 5);
  models[4] = &m1;
  models[5] = &m2;
  Mat Xs = test_points(210, 8);
  MixingWeights w = equal_weights({4, 5});
  MixturePrediction mp = mix(models, w, Xs);
  Vec mean = mix_mean(models, w, Xs);
  for (int i = 0; i < 8; ++i) CHECK(mean(i) == mp.mean(i));
}

TEST_CASE("diagonal mode reproduces the diagonal of the full mixture") {
  ModelMap models;
  FittedGP m1 = make_model(121, 6);
  FittedGP m2 = make_model(122, 7);
  models[6] = &m1;
  models[7] = &m2;
  Mat Xs = test_points(220, 7);
  MixingWeights w = equal_weights({6, 7});
  MixturePrediction full = mix(models, w, Xs, false);
  MixturePrediction diag = mix(models, w, Xs, true);
  CHECK((diag.mean - full.mean).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 7; ++i) {
    CHECK(diag.cov(i, i) == doctest::Approx(full.cov(i, i)).epsilon(1e-12));
    for (int j = 0; j < 7; ++j)
      if (i != j) CHECK(diag.cov(i, j) == 0.0);
  }
}

TEST_CASE("inverse-MSE weights, worked example") {
  // MSEs {1, 2} -> weights {2/3, 1/3}.
  std::map<MonthId, double> mse = {{1, 1.0}, {2, 2.0}};
  MixingWeights w = weights_from_mse(mse, 9);
  w.validate();
  CHECK(w.scheme == WeightScheme::MSE);
  REQUIRE(w.calibration_month.has_value());
  CHECK(*w.calibration_month == 9);
  CHECK(w.weights.at(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(w.weights.at(2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(w.weights.at(9) == 0.0);
  CHECK(w.mse.at(1) == 1.0);
  CHECK(w.mse.at(2) == 2.0);
}

TEST_CASE("zero-MSE models split the weight") {
  std::map<MonthId, double> mse = {{1, 0.0}, {2, 3.0}, {3, 0.0}};
  MixingWeights w = weights_from_mse(mse, 8);
  w.validate();
  CHECK(w.weights.at(1) == 0.5);
  CHECK(w.weights.at(3) == 0.5);
  CHECK(w.weights.at(2) == 0.0);
}

TEST_CASE("weights_from_mse input validation") {
  CHECK_THROWS_AS(weights_from_mse({}, 5), std::invalid_argument);
  // Model months must precede the calibration month.
  CHECK_THROWS_AS(weights_from_mse({{6, 1.0}}, 5), std::invalid_argument);
  CHECK_THROWS_AS(weights_from_mse({{5, 1.0}}, 5), std::invalid_argument);
  // Non-finite or negative MSE is a numerical failure, not a config mistake.
  CHECK_THROWS_AS(weights_from_mse({{1, -0.5}}, 5), NumericalError);
  CHECK_THROWS_AS(weights_from_mse({{1, std::nan("")}}, 5), NumericalError);
}

TEST_CASE("calibration_mse is the mean squared prediction error") {
  FittedGP m = make_model(131, 1);
  Mat Xc = test_points(230, 11);
  Rng rng(232);
  Vec rc(11);
  for (int i = 0; i < 11; ++i) rc(i) = 0.1 * rng.normal();
  const double got = calibration_mse(m, Xc, rc);
  Vec pred = predict_mean(m, Xc);
  double want = 0.0;
  for (int i = 0; i < 11; ++i) want += (pred(i) - rc(i)) * (pred(i) - rc(i));
  want /= 11.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("mse_weights composes calibration_mse and weights_from_mse") {
  ModelMap models;
  FittedGP m1 = make_model(141, 2);
  FittedGP m2 = make_model(142, 3);
  models[2] = &m1;
  models[3] = &m2;
  Mat Xc = test_points(240, 9);
  Rng rng(241);
  Vec rc(9);
  for (int i = 0; i < 9; ++i) rc(i) = 0.1 * rng.normal();

  MixingWeights direct = mse_weights(models, Xc, rc, 7);
  std::map<MonthId, double> mse;
  for (const auto& [mid, model] : models) mse[mid] = calibration_mse(*model, Xc, rc);
  MixingWeights composed = weights_from_mse(mse, 7);

  REQUIRE(direct.weights.size() == composed.weights.size());
  for (const auto& [mid, wi] : direct.weights) CHECK(composed.weights.at(mid) == wi);
  for (const auto& [mid, e] : direct.mse) CHECK(composed.mse.at(mid) == e);
}

TEST_CASE("weights validation catches broken invariants") {
  MixingWeights w;
  w.scheme = WeightScheme::Equal;
  w.weights = {{1, 0.7}, {2, 0.7}};  // sums to 1.4
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);

  w.weights = {{1, -0.2}, {2, 1.2}};
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);

  w.weights = {{1, 0.5}, {2, 0.5}};
  w.calibration_month = 3;  // equal scheme must not carry one
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);

  MixingWeights v;
  v.scheme = WeightScheme::MSE;
  v.weights = {{1, 1.0}};
  v.calibration_month.reset();  // mse scheme must carry one
  CHECK_THROWS_AS(v.validate(), std::invalid_argument);
}

TEST_CASE("mix rejects mismatched inputs") {
  ModelMap models;
  FittedGP m1 = make_model(151, 1);
  models[1] = &m1;
  Mat Xs = test_points(250, 4);
  MixingWeights w = equal_weights({1, 2});  // weight for a missing model
  CHECK_THROWS_AS(mix(models, w, Xs), std::invalid_argument);
}
