#pragma once

#include <Eigen/Dense>

#include <vector>

#include "causalfuse/estimators.hpp"
#include "causalfuse/types.hpp"

namespace causalfuse {

// Binary-outcome extension. The latent model is Y = 1{beta1 X + beta2 Z + U > 0}
// with (U, V | Z) bivariate normal; b2 = beta2 + rho_zu aggregates the
// exclusion violation. All fits are through the origin (the model carries no
// intercepts) and y must be exactly 0/1.

struct ProbitParams {
  double beta1 = 0.0;
  double b2 = 0.0;
  double rho_uv = 0.0;
  double gamma = 0.0;
  double sigma_v = 1.0;
};

// sum_i log Phi(s_i (beta1 x_i + b2 z_i)), s_i = 2 y_i - 1. Finite for any
// finite parameters (stable log-CDF tail). Throws NonBinaryOutcome.
double probit_loglik_e(double beta1, double b2, const DataBlock& exp);

// Analytic gradient of probit_loglik_e in (beta1, b2).
Eigen::Vector2d probit_score_e(double beta1, double b2, const DataBlock& exp);

struct ProbitFit {
  double beta1 = 0.0;
  double b2 = 0.0;
  Eigen::Matrix2d var = Eigen::Matrix2d::Zero();  // inverse observed information
  double loglik = 0.0;
  std::vector<double> objective_trace;  // non-decreasing by construction
};

// Newton-Raphson with step halving on the two-slope probit.
ProbitFit probit_mle(const DataBlock& block, const EstimatorOptions& opts = {});

struct ObsConstraints {
  double c1 = 0.0;       // reduced-form slope on X in O
  double c2 = 0.0;       // reduced-form slope on Z in O
  double gamma = 0.0;    // first-stage Gaussian MLE
  double sigma_v = 0.0;
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();  // (c1, c2, gamma, sigma_v)
};

// First stage P(X|Z) = phi((X - gamma Z)/sigma_v) by MLE, then the
// reduced-form probit of Y on (X, Z). Joint covariance by stacked influence
// functions. Throws NonBinaryOutcome, DegenerateZ.
ObsConstraints obs_constraints(const DataBlock& obs, const EstimatorOptions& opts = {});

enum class PenaltyMode { Hard, Quadratic };

// Combined estimator. Hard: eliminate (beta1, b2) through the constraint
// displays
//   c1 = (beta1 + rho/sigma_v) / sqrt(1 - rho^2)
//   c2 = (b2 - rho gamma / sigma_v) / sqrt(1 - rho^2)
// and maximize the 1-D profile over rho by golden section plus refinement.
// Quadratic: maximize lnL_E - 0.5 r' Sigma_C^-1 r over (beta1, b2, rho) with
// r the constraint residuals, by Nelder-Mead. With an empty O block the
// Quadratic mode reduces to the experiment-only MLE.
EstimateReport probit_combined(const FusedDataset& ds, PenaltyMode mode = PenaltyMode::Hard,
                               const EstimatorOptions& opts = {});

EstimateReport probit_experiment_only(const FusedDataset& ds, const EstimatorOptions& opts = {});

}  // namespace causalfuse
