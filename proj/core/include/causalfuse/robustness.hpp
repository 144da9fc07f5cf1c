#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "causalfuse/estimators.hpp"
#include "causalfuse/types.hpp"

namespace causalfuse {

struct CVResult {
  std::vector<double> grid;
  std::vector<double> cv_error;
  std::size_t selected = 0;  // argmin, first index on ties
};

// Slopes (beta1, b2) fitted on an experimental block with one unit removed.
// Any observational statistics the estimator uses are held fixed inside the
// closure; the O block is never left out.
using FoldEstimator = std::function<std::pair<double, double>(const DataBlock&)>;

// CV = (1/n_E) sum_i (y_i - yhat_i)^2 where yhat_i uses the fold slopes plus
// the fold-mean intercept. Requires n_E >= 4. Singular folds raise
// DegenerateFold; other estimator errors propagate.
double loocv_error(const FusedDataset& ds, const FoldEstimator& estimator);

// LOOCV of w * beta1^O + (1-w) * beta1^E(-i) with b2 from the fold fit;
// beta1^O and the O statistics are fixed across folds.
CVResult tune_weight(const FusedDataset& ds, const std::vector<double>& w_grid,
                     ObsCovMode mode = ObsCovMode::InfluenceFunction,
                     const EstimatorOptions& opts = {});

// LOOCV over regularized_regression(lambda); (b_iv, gamma) fixed across folds.
CVResult tune_lambda(const FusedDataset& ds, const std::vector<double>& lambda_grid,
                     const EstimatorOptions& opts = {});

std::vector<double> default_weight_grid();   // {0, 0.05, ..., 1}
std::vector<double> default_lambda_grid();   // {0} + 25 log points 1e-3..1e4 + {inf}

// Two-stage robust weighting: the Lemma-4 plug-in weight is accepted only if
// its paired LOOCV improvement over w = 0 clears `margin_se` standard errors
// of the fold differences; otherwise the experiment-only estimate is kept.
struct GatedWeightFit {
  double beta1 = 0.0;
  double w_o = 0.0;
  double cv_experiment_only = 0.0;
  double cv_weighted = 0.0;
  bool accepted = false;
};

GatedWeightFit cv_gated_weighted(const FusedDataset& ds, double margin_se = 1.0,
                                 ObsCovMode mode = ObsCovMode::InfluenceFunction,
                                 const EstimatorOptions& opts = {});

}  // namespace causalfuse
