#pragma once

#include <cstdint>

namespace causalfuse {

// Analytic variance / efficiency formulas for the combined GMM under
// homoscedasticity, in the design-dependent form (group Z variances may
// differ under non-random assignment).
struct MomentProfile {
  double pi_o = 0.0;      // proportion of observational units
  double var_x_e = 1.0;   // Var(X | E)
  double var_x_o = 1.0;   // Var(X | O)
  double var_z_e = 1.0;   // Var(Z | E)
  double var_z_o = 1.0;   // Var(Z | O)
  double gamma = 0.0;     // first-stage slope
  double sigma2 = 1.0;    // Var(eps)
  std::int64_t n_e = 1;
};

// Throws std::invalid_argument on non-positive variances or pi_o outside [0,1).
void validate(const MomentProfile& p);

// (sigma2 / n_e) * [Var(X|E) + pi_o * gamma^2 Var(Z|O) Var(Z|E) / Var(Z)]^-1
// with Var(Z) = pi_o Var(Z|O) + pi_e Var(Z|E).
double asymptotic_var_gmm(const MomentProfile& p);

// Var(b1^E) / Var(b1^GMM); >= 1 and strictly increasing in pi_o, gamma^2,
// and Var(Z|E).
double efficiency_ratio(const MomentProfile& p);

// Limit of the ratio as pi_o -> 1: 1 + Var(Z|E)/Var(Z|O).
double design_limit_ratio(double var_z_e, double var_z_o);

// Second moment of a standard normal restricted to the two-sided tails
// {|Z| > Phi^-1(1-q)} of total mass 2q, q in (0, 0.5]. Closed form via the
// Mills ratio: 1 + c*phi(c)/q with c = Phi^-1(1-q).
double two_sided_tail_variance(double q);

struct QuantileDesignMoments {
  double var_z_e = 1.0;
  double var_z_o = 1.0;
};

// Z moments implied by the tails assignment rule p(E) = pi_e/(2Q) on the
// top/bottom Q quantiles: Var(Z|E) is the tail variance, Var(Z|O) follows
// from the law of total variance with all conditional means zero.
QuantileDesignMoments quantile_design_moments(double q, double pi_e);

// Full profile for the tails design under the simulation DGP conventions:
// Var(X|E) = 1 (randomized), Var(X|O) = gamma^2 Var(Z|O) + sigma_v2.
MomentProfile quantile_design_profile(double q, double pi_e, double gamma, double sigma_v2,
                                      double sigma2, std::int64_t n_e);

}  // namespace causalfuse
