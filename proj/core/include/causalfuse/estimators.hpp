#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>

#include "causalfuse/types.hpp"

namespace causalfuse {

// Symbolic lambda for the equality-constrained regression.
inline constexpr double kLambdaInf = std::numeric_limits<double>::infinity();

struct EstimatorOptions {
  // Relative smallest-eigenvalue cutoff for SingularDesign.
  double singular_tol = 1e-10;
  // |corr(X,Z|O)| guard for WeakFirstStage.
  double weak_first_stage_tol = 1e-8;
};

// Two-regressor least squares on demeaned (y, x, z). Slopes only; the
// intercept is implied by the sample means. var is sigma2 * (M'M)^-1 with
// sigma2 = RSS / (n - 2) on the demeaned data.
struct Ols2Fit {
  double beta1 = 0.0;
  double b2 = 0.0;
  Eigen::Matrix2d var = Eigen::Matrix2d::Zero();
  double sigma2 = 0.0;
  double mean_y = 0.0, mean_x = 0.0, mean_z = 0.0;

  double predict(double x, double z) const {
    return (mean_y - beta1 * mean_x - b2 * mean_z) + beta1 * x + b2 * z;
  }
};

Ols2Fit ols2(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
             const EstimatorOptions& opts = {});
Ols2Fit ols2(const DataBlock& block, const EstimatorOptions& opts = {});

// b_iv = Cov(Y,Z|O) / Cov(X,Z|O). Throws WeakFirstStage below the guard.
double incorrect_iv(const DataBlock& obs, const EstimatorOptions& opts = {});

struct FirstStageFit {
  double gamma = 0.0;
  double var_gamma = 0.0;
  double sigma_v2 = 0.0;  // residual variance of X on Z
};

// Demeaned simple regression of X on Z in the observational block.
FirstStageFit first_stage(const DataBlock& obs);

// Joint sampling covariance of (b_iv, gamma) within O.
enum class ObsCovMode { InfluenceFunction, Bootstrap };

struct ObsStats {
  double b_iv = 0.0;
  double gamma = 0.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();  // [b_iv, gamma]
};

ObsStats obs_stats(const DataBlock& obs, ObsCovMode mode = ObsCovMode::InfluenceFunction,
                   int bootstrap_draws = 500, std::uint64_t bootstrap_seed = 0,
                   const EstimatorOptions& opts = {});

struct BiasCorrectedFit {
  double beta1 = 0.0;
  double var_beta1 = 0.0;
};

// beta1^O = b_iv - b2^E / gamma, delta-method variance including the
// within-O covariance of (b_iv, gamma). Cross-dataset covariances are zero.
BiasCorrectedFit bias_corrected_obs(const ObsStats& obs, double b2_hat_e, double var_b2_e,
                                    const EstimatorOptions& opts = {});

struct WeightedCombine {
  double beta1 = 0.0;
  double var_beta1 = 0.0;
  double w_o = 0.0;
  double w_e = 0.0;
};

// Inverse-variance weighting of two uncorrelated estimates.
WeightedCombine weighted_combine(double beta1_e, double var_e, double beta1_o, double var_o);

struct RegularizedFit {
  double beta1 = 0.0;
  double b2 = 0.0;
  double constraint_residual = 0.0;  // b_iv - beta1 - b2/gamma at the optimum
};

// Minimizes sum_E (y - b1 x - b2 z)^2 + lambda (b_iv - b1 - b2/gamma)^2 on
// demeaned data. lambda = kLambdaInf solves the equality-constrained problem
// exactly by substitution.
RegularizedFit regularized_regression(const DataBlock& exp, double b_iv, double gamma,
                                      double lambda, const EstimatorOptions& opts = {});

// Moment system of the combined GMM. The two experimental moments use
// within-group orthogonalized regressors (x against z and vice versa), so
// gamma_mat has exactly the rows [x'x, 0], [0, z'z], [Zo'Xo, Zo'Zo] and the
// empty-O system coincides with the joint two-regressor solve.
struct MomentSystem {
  Eigen::Matrix<double, 3, 2> gamma_mat = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::Vector3d m0 = Eigen::Vector3d::Zero();
  Eigen::Matrix3d omega = Eigen::Matrix3d::Zero();  // diag cross-products
  double sigma2_hat = 0.0;                          // pooled from the E fit
  Eigen::Index n_e = 0, n_o = 0;
};

MomentSystem build_moment_system(const FusedDataset& ds, const EstimatorOptions& opts = {});

struct GmmWeighting {
  enum class Kind { Optimal, TwoStepFeasible, Custom };
  Kind kind = Kind::Optimal;
  Eigen::Matrix3d w = Eigen::Matrix3d::Identity();  // used only for Custom

  static GmmWeighting optimal() { return {Kind::Optimal, Eigen::Matrix3d::Identity()}; }
  static GmmWeighting two_step_feasible() {
    return {Kind::TwoStepFeasible, Eigen::Matrix3d::Identity()};
  }
  static GmmWeighting custom(const Eigen::Matrix3d& w) { return {Kind::Custom, w}; }
};

// Closed-form linear GMM: theta = (G'WG)^-1 G'W m0. Optimal uses W = Omega^-1
// with Omega = diag(x'x, z'z, Zo'Zo); the variance is sigma2 (G'Omega^-1 G)^-1.
EstimateReport gmm_combine(const FusedDataset& ds, const GmmWeighting& weighting = GmmWeighting::optimal(),
                           const EstimatorOptions& opts = {});

// Report-level wrappers used by the CLI and the Monte Carlo harness.
EstimateReport estimate_experiment_only(const FusedDataset& ds, const EstimatorOptions& opts = {});
EstimateReport estimate_obs_ols(const FusedDataset& ds, const EstimatorOptions& opts = {});
EstimateReport estimate_obs_iv(const FusedDataset& ds, const EstimatorOptions& opts = {});
EstimateReport estimate_bias_corrected(const FusedDataset& ds,
                                       ObsCovMode mode = ObsCovMode::InfluenceFunction,
                                       const EstimatorOptions& opts = {});
EstimateReport estimate_weighted(const FusedDataset& ds,
                                 ObsCovMode mode = ObsCovMode::InfluenceFunction,
                                 const EstimatorOptions& opts = {});
EstimateReport estimate_regularized(const FusedDataset& ds, double lambda,
                                    const EstimatorOptions& opts = {});

}  // namespace causalfuse
