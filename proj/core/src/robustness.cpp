#include "causalfuse/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace causalfuse {

namespace {

DataBlock drop_row(const DataBlock& b, Eigen::Index i) {
  DataBlock out;
  const Eigen::Index n = b.n();
  out.y.resize(n - 1);
  out.x.resize(n - 1);
  out.z.resize(n - 1);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    out.y[k] = b.y[j];
    out.x[k] = b.x[j];
    out.z[k] = b.z[j];
    ++k;
  }
  return out;
}

void require_foldable(const DataBlock& e) {
  if (e.n() < 4) {
    throw EstimationError("DegenerateFold",
                          "loocv: needs n_E >= 4, got " + std::to_string(e.n()));
  }
}

// Prediction with the fold slopes and the fold-mean intercept; on centered
// data this is exactly the CV sum over experimental units.
double fold_prediction(const DataBlock& fold, double beta1, double b2, double x, double z) {
  const double a = fold.y.mean() - beta1 * fold.x.mean() - b2 * fold.z.mean();
  return a + beta1 * x + b2 * z;
}

std::size_t argmin_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

}  // namespace

double loocv_error(const FusedDataset& ds, const FoldEstimator& estimator) {
  const auto [e, o] = split(ds);
  (void)o;
  require_foldable(e);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < e.n(); ++i) {
    const DataBlock fold = drop_row(e, i);
    std::pair<double, double> slopes;
    try {
      slopes = estimator(fold);
    } catch (const EstimationError& err) {
      if (err.name() == "SingularDesign") {
        throw EstimationError("DegenerateFold", "loocv: fold " + std::to_string(i) +
                                                    " is singular: " + err.what());
      }
      throw;
    }
    const double pred = fold_prediction(fold, slopes.first, slopes.second, e.x[i], e.z[i]);
    const double r = e.y[i] - pred;
    acc += r * r;
  }
  return acc / static_cast<double>(e.n());
}

namespace {

struct WeightCvParts {
  // Per-fold pieces so that, for any w, the loss of fold i is
  // (resid_i - w * slope_gap_i * xdev_i)^2 with the intercept folded in.
  std::vector<double> resid;      // y_i - pred at w = 0
  std::vector<double> delta;      // change of prediction per unit w
  double beta1_e_full = 0.0;
  double beta1_o = 0.0;
};

WeightCvParts weight_cv_parts(const FusedDataset& ds, ObsCovMode mode,
                              const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  require_foldable(e);
  if (o.n() < 3) {
    throw EstimationError("DegenerateZ", "tune_weight: observational block too small");
  }
  const Ols2Fit efull = ols2(e, opts);
  const ObsStats s = obs_stats(o, mode, 500, 0, opts);
  const BiasCorrectedFit bc = bias_corrected_obs(s, efull.b2, efull.var(1, 1), opts);

  WeightCvParts parts;
  parts.beta1_e_full = efull.beta1;
  parts.beta1_o = bc.beta1;
  parts.resid.resize(static_cast<std::size_t>(e.n()));
  parts.delta.resize(static_cast<std::size_t>(e.n()));
  for (Eigen::Index i = 0; i < e.n(); ++i) {
    const DataBlock fold = drop_row(e, i);
    Ols2Fit f;
    try {
      f = ols2(fold, opts);
    } catch (const EstimationError& err) {
      throw EstimationError("DegenerateFold",
                            "tune_weight: fold " + std::to_string(i) + ": " + err.what());
    }
    // prediction at weight w: intercept and slope both move linearly in w
    const double pred0 = fold_prediction(fold, f.beta1, f.b2, e.x[i], e.z[i]);
    const double gap = parts.beta1_o - f.beta1;
    parts.resid[static_cast<std::size_t>(i)] = e.y[i] - pred0;
    parts.delta[static_cast<std::size_t>(i)] = gap * (e.x[i] - fold.x.mean());
  }
  return parts;
}

std::vector<double> weight_cv_losses(const WeightCvParts& parts, double w) {
  std::vector<double> out(parts.resid.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = parts.resid[i] - w * parts.delta[i];
    out[i] = r * r;
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

CVResult tune_weight(const FusedDataset& ds, const std::vector<double>& w_grid, ObsCovMode mode,
                     const EstimatorOptions& opts) {
  if (w_grid.empty()) {
    throw ValidationError("InvalidHyperparameter", "tune_weight: empty grid");
  }
  for (double w : w_grid) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw ValidationError("InvalidHyperparameter",
                            "tune_weight: weight " + std::to_string(w) + " outside [0,1]");
    }
  }
  const WeightCvParts parts = weight_cv_parts(ds, mode, opts);
  CVResult res;
  res.grid = w_grid;
  res.cv_error.reserve(w_grid.size());
  for (double w : w_grid) {
    res.cv_error.push_back(mean_of(weight_cv_losses(parts, w)));
  }
  res.selected = argmin_first(res.cv_error);
  return res;
}

CVResult tune_lambda(const FusedDataset& ds, const std::vector<double>& lambda_grid,
                     const EstimatorOptions& opts) {
  if (lambda_grid.empty()) {
    throw ValidationError("InvalidHyperparameter", "tune_lambda: empty grid");
  }
  const auto [e, o] = split(ds);
  require_foldable(e);
  const ObsStats s = obs_stats(o, ObsCovMode::InfluenceFunction, 0, 0, opts);

  CVResult res;
  res.grid = lambda_grid;
  res.cv_error.assign(lambda_grid.size(), 0.0);
  for (Eigen::Index i = 0; i < e.n(); ++i) {
    const DataBlock fold = drop_row(e, i);
    for (std::size_t j = 0; j < lambda_grid.size(); ++j) {
      RegularizedFit f;
      try {
        f = regularized_regression(fold, s.b_iv, s.gamma, lambda_grid[j], opts);
      } catch (const EstimationError& err) {
        throw EstimationError("DegenerateFold",
                              "tune_lambda: fold " + std::to_string(i) + ": " + err.what());
      }
      const double pred = fold_prediction(fold, f.beta1, f.b2, e.x[i], e.z[i]);
      const double r = e.y[i] - pred;
      res.cv_error[j] += r * r;
    }
  }
  for (double& v : res.cv_error) v /= static_cast<double>(e.n());
  res.selected = argmin_first(res.cv_error);
  return res;
}

std::vector<double> default_weight_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(0.05 * i);
  return g;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g{0.0};
  // 25 log-spaced points on [1e-3, 1e4]
  for (int i = 0; i < 25; ++i) {
    g.push_back(std::pow(10.0, -3.0 + 7.0 * i / 24.0));
  }
  g.push_back(kLambdaInf);
  return g;
}

GatedWeightFit cv_gated_weighted(const FusedDataset& ds, double margin_se, ObsCovMode mode,
                                 const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  const Ols2Fit efull = ols2(e, opts);
  const ObsStats s = obs_stats(o, mode, 500, 0, opts);
  const BiasCorrectedFit bc = bias_corrected_obs(s, efull.b2, efull.var(1, 1), opts);
  const WeightedCombine comb =
      weighted_combine(efull.beta1, efull.var(0, 0), bc.beta1, bc.var_beta1);

  const WeightCvParts parts = weight_cv_parts(ds, mode, opts);
  const std::vector<double> l0 = weight_cv_losses(parts, 0.0);
  const std::vector<double> lw = weight_cv_losses(parts, comb.w_o);

  // Paired fold differences; the candidate must beat w = 0 by margin_se
  // standard errors.
  const std::size_t n = l0.size();
  double dbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) dbar += lw[i] - l0[i];
  dbar /= static_cast<double>(n);
  double s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (lw[i] - l0[i]) - dbar;
    s2 += d * d;
  }
  const double se = std::sqrt(s2 / static_cast<double>(n - 1) / static_cast<double>(n));

  GatedWeightFit fit;
  fit.cv_experiment_only = mean_of(l0);
  fit.cv_weighted = mean_of(lw);
  fit.accepted = dbar < -margin_se * se;
  fit.w_o = fit.accepted ? comb.w_o : 0.0;
  fit.beta1 = fit.accepted ? comb.beta1 : efull.beta1;
  return fit;
}

}  // namespace causalfuse
