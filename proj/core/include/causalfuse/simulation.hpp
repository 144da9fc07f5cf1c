#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "causalfuse/efficiency.hpp"
#include "causalfuse/types.hpp"

namespace causalfuse {

struct DesignRule {
  enum class Kind { RandomSplit, QuantileTails };
  Kind kind = Kind::RandomSplit;
  double q = 0.5;  // tails mass per side, only for QuantileTails

  static DesignRule random_split() { return {Kind::RandomSplit, 0.5}; }
  static DesignRule quantile_tails(double q) { return {Kind::QuantileTails, q}; }
};

// Ground-truth DGP parameters. Latent (Z, U, V) are drawn from a zero-mean
// trivariate normal with Var(Z) = 1, Var(U) = var_u, Var(V) = sigma_v2,
// Cov(Z,U) = rho_zu (group-specific), Cov(Z,V) = 0, Cov(U,V) = cov_uv.
// X = gamma Z + V in O, X ~ N(0,1) in E; Y = beta1 X + beta2 Z + theta X U + U.
struct SimulationConfig {
  double beta1 = 0.1;
  double beta2 = 0.1;
  double gamma = 0.95;
  double sigma_v2 = -1.0;  // < 0 means default 1 - gamma^2 (equal X variance)
  double var_u = 1.0;
  double rho_zu_e = 0.4;
  double rho_zu_o = 0.4;
  double cov_uv = -1.0;    // < 0 means default 0.4 * sigma_v
  double theta = 0.0;
  double pi_e = 0.05;
  std::int64_t n_e = 100;
  DesignRule assignment = DesignRule::random_split();
  std::uint64_t seed = 0;

  // Aggregated exclusion violation b2 = beta2 + Cov(U,Z|g)/Var(Z).
  double b2_true(Group g) const { return beta2 + (g == Group::E ? rho_zu_e : rho_zu_o); }

  // Fills dependent defaults and checks the implied covariances are PSD and
  // the design feasible. Throws ValidationError("InvalidConfig", ...).
  SimulationConfig resolved() const;

  std::int64_t n_o_target() const;  // round(n_e * pi_o / pi_e)
};

// Analytic profile of the resolved config (sigma2 = var_u - rho_zu_e^2,
// i.e. Var(U - Cov(U,Z) Z)); uses the truncated-normal Z moments under a
// tails design.
MomentProfile analytic_profile(const SimulationConfig& cfg);

struct DrawnSample {
  FusedDataset data;
  std::vector<double> u;  // latent, aligned with data.records()
  std::vector<double> v;
};

// Deterministic given (cfg.seed, replication_index); group sizes are exact.
// Throws EstimationError("InfeasibleDesign", ...) if the tails cannot supply
// n_e experimental units.
DrawnSample draw_sample_detailed(const SimulationConfig& cfg, std::uint64_t replication_index);
FusedDataset draw_sample(const SimulationConfig& cfg, std::uint64_t replication_index);

enum class EstimatorKind {
  ExperimentOnly,
  CombinedGMM,
  ObsOLS,
  ObsIV,
  BiasCorrectedObs,
  Weighted,
  WeightedCV,   // LOOCV-gated weighting (robust to misspecification)
  Regularized,  // lambda tuned by LOOCV per replication
};

std::string_view estimator_kind_name(EstimatorKind k);
std::optional<EstimatorKind> estimator_kind_from_name(std::string_view name);

struct EstimatorStats {
  double bias = 0.0;
  double bias2 = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double relative_mse = 1.0;     // vs ExperimentOnly
  double efficiency_gain = 0.0;  // 1 - relative_mse
  std::int64_t failures = 0;
};

struct MonteCarloSummary {
  std::vector<EstimatorKind> estimators;
  std::vector<EstimatorStats> stats;  // aligned with estimators
  std::int64_t replications = 0;

  const EstimatorStats* find(EstimatorKind k) const;
};

// Replications are independent work items reduced in index order, so results
// are bit-identical for any thread count. ExperimentOnly is always computed
// (it is the relative-MSE benchmark). Per-replication estimator failures are
// counted and tolerated below 1% of replications, fatal above.
MonteCarloSummary run_monte_carlo(const SimulationConfig& cfg,
                                  std::vector<EstimatorKind> estimators,
                                  std::int64_t replications, int threads = 1);

struct SweepResult {
  std::string parameter;
  std::vector<double> values;
  std::vector<MonteCarloSummary> summaries;
};

// parameter in {"pi_o", "gamma", "theta", "rho_zu_o", "q"}.
SweepResult misspecification_sweep(const SimulationConfig& cfg, const std::string& parameter,
                                   const std::vector<double>& values,
                                   std::vector<EstimatorKind> estimators,
                                   std::int64_t replications, int threads = 1);

}  // namespace causalfuse
