#include "gpens/ensemble.hpp"

#include <cmath>

namespace gpens {

void MixingWeights::validate() const {
  double sum = 0.0;
  for (const auto& [m, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("MixingWeights: weights must be finite and >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("MixingWeights: weights must sum to 1");
  if (scheme == WeightScheme::MSE) {
    if (!calibration_month)
      throw std::invalid_argument("MixingWeights: MSE scheme requires a calibration month");
    auto it = weights.find(*calibration_month);
    if (it == weights.end() || it->second != 0.0)
      throw std::invalid_argument("MixingWeights: calibration month must carry weight 0");
  } else if (calibration_month) {
    throw std::invalid_argument("MixingWeights: Equal scheme carries no calibration month");
  }
}

const char* weight_scheme_name(WeightScheme s) {
  return s == WeightScheme::Equal ? "equal" : "mse";
}

WeightScheme parse_weight_scheme(const std::string& s) {
  if (s == "equal") return WeightScheme::Equal;
  if (s == "mse") return WeightScheme::MSE;
  throw ConfigError("unknown weight scheme '" + s + "' (expected equal|mse)");
}

MixingWeights equal_weights(const std::vector<MonthId>& months) {
  if (months.empty()) throw std::invalid_argument("equal_weights: empty month list");
  MixingWeights out;
  out.scheme = WeightScheme::Equal;
  const double w = 1.0 / static_cast<double>(months.size());
  for (MonthId m : months) {
    if (!out.weights.emplace(m, w).second)
      throw std::invalid_argument("equal_weights: duplicate month id");
  }
  return out;
}

double calibration_mse(const FittedGP& model, const Mat& calib_X, const Vec& calib_r) {
  if (calib_X.rows() < 1 || calib_X.rows() != calib_r.size())
    throw std::invalid_argument("calibration_mse: calibration slice is empty or misaligned");
  const Vec pred = predict_mean(model, calib_X);
  return (calib_r - pred).squaredNorm() / static_cast<double>(calib_r.size());
}

MixingWeights weights_from_mse(const std::map<MonthId, double>& mse, MonthId calib_month) {
  if (mse.empty()) throw std::invalid_argument("weights_from_mse: no models");
  MixingWeights out;
  out.scheme = WeightScheme::MSE;
  out.calibration_month = calib_month;
  out.mse = mse;

  std::vector<MonthId> zero_months;
  for (const auto& [m, v] : mse) {
    if (!(m < calib_month))
      throw std::invalid_argument("weights_from_mse: calibration month must postdate every model");
    if (!std::isfinite(v) || v < 0.0)
      throw NumericalError("weights_from_mse: invalid MSE", m, v);
    if (v == 0.0) zero_months.push_back(m);
  }

  if (!zero_months.empty()) {
    // Limit of inverse-MSE weighting: all weight goes to the exact predictors.
    for (const auto& [m, v] : mse) out.weights.emplace(m, 0.0);
    const double w = 1.0 / static_cast<double>(zero_months.size());
    for (MonthId m : zero_months) out.weights[m] = w;
  } else {
    double denom = 0.0;
    for (const auto& [m, v] : mse) denom += 1.0 / v;
    for (const auto& [m, v] : mse) out.weights.emplace(m, (1.0 / v) / denom);
  }
  out.weights.emplace(calib_month, 0.0);
  return out;
}

MixingWeights mse_weights(const ModelMap& models, const Mat& calib_X, const Vec& calib_r,
                          MonthId calib_month) {
  if (models.empty()) throw std::invalid_argument("mse_weights: no models");
  std::map<MonthId, double> mse;
  for (const auto& [m, model] : models) {
    if (!model) throw std::invalid_argument("mse_weights: null model");
    mse.emplace(m, calibration_mse(*model, calib_X, calib_r));
  }
  return weights_from_mse(mse, calib_month);
}

namespace {

const FittedGP& model_for(const ModelMap& models, MonthId m) {
  auto it = models.find(m);
  if (it == models.end() || !it->second)
    throw std::invalid_argument("mix: missing model for positively weighted month " +
                                std::to_string(m));
  return *it->second;
}

}  // namespace

MixturePrediction mix(const ModelMap& models, const MixingWeights& w, const Mat& X_test,
                      bool diag_cov) {
  w.validate();
  const Eigen::Index m = X_test.rows();
  MixturePrediction out;
  out.weights = w;
  out.mean = Vec::Zero(m);

  if (diag_cov) {
    Vec second_moment = Vec::Zero(m);
    for (const auto& [month, wj] : w.weights) {
      if (wj == 0.0) continue;
      const FittedGP& gp = model_for(models, month);
      Vec mu = predict_mean(gp, X_test);
      const Vec var = predict_var(gp, X_test);
      out.mean += wj * mu;
      second_moment += wj * (var + mu.cwiseProduct(mu));
      out.component_means.emplace(month, std::move(mu));
    }
    out.cov = (second_moment - out.mean.cwiseProduct(out.mean)).asDiagonal();
    return out;
  }

  Mat second_moment = Mat::Zero(m, m);
  for (const auto& [month, wj] : w.weights) {
    if (wj == 0.0) continue;
    const FittedGP& gp = model_for(models, month);
    GPPrediction p = predict(gp, X_test);
    out.mean += wj * p.mean;
    second_moment += wj * (p.cov + p.mean * p.mean.transpose());
    out.component_means.emplace(month, std::move(p.mean));
  }
  Mat cov = second_moment - out.mean * out.mean.transpose();
  out.cov = 0.5 * (cov + cov.transpose());
  return out;
}

Vec mix_mean(const ModelMap& models, const MixingWeights& w, const Mat& X_test) {
  w.validate();
  Vec mean = Vec::Zero(X_test.rows());
  for (const auto& [month, wj] : w.weights) {
    if (wj == 0.0) continue;
    mean += wj * predict_mean(model_for(models, month), X_test);
  }
  return mean;
}

}  // namespace gpens
