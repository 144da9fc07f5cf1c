#include "causalfuse/efficiency.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "causalfuse/normal.hpp"

namespace causalfuse {

void validate(const MomentProfile& p) {
  if (!(p.pi_o >= 0.0 && p.pi_o < 1.0)) {
    throw std::invalid_argument("MomentProfile: pi_o must be in [0,1)");
  }
  if (!(p.var_x_e > 0.0 && p.var_x_o > 0.0 && p.var_z_e > 0.0 && p.var_z_o > 0.0)) {
    throw std::invalid_argument("MomentProfile: variances must be positive");
  }
  if (!(p.sigma2 > 0.0) || p.n_e < 1) {
    throw std::invalid_argument("MomentProfile: sigma2 must be positive and n_e >= 1");
  }
}

namespace {

// pi_o * gamma^2 Var(Z|O) Var(Z|E) / Var(Z), the gain term shared by the
// variance and the ratio.
double gain_term(const MomentProfile& p) {
  const double pi_e = 1.0 - p.pi_o;
  const double var_z = p.pi_o * p.var_z_o + pi_e * p.var_z_e;
  return p.pi_o * p.gamma * p.gamma * p.var_z_o * p.var_z_e / var_z;
}

}  // namespace

double asymptotic_var_gmm(const MomentProfile& p) {
  validate(p);
  return p.sigma2 / static_cast<double>(p.n_e) / (p.var_x_e + gain_term(p));
}

double efficiency_ratio(const MomentProfile& p) {
  validate(p);
  return 1.0 + gain_term(p) / p.var_x_e;
}

double design_limit_ratio(double var_z_e, double var_z_o) {
  if (!(var_z_e > 0.0 && var_z_o > 0.0)) {
    throw std::invalid_argument("design_limit_ratio: variances must be positive");
  }
  return 1.0 + var_z_e / var_z_o;
}

double two_sided_tail_variance(double q) {
  if (!(q > 0.0 && q <= 0.5)) {
    throw std::invalid_argument("two_sided_tail_variance: q must be in (0, 0.5]");
  }
  if (q == 0.5) return 1.0;
  const double c = norm_quantile(1.0 - q);
  return 1.0 + c * norm_pdf(c) / q;
}

QuantileDesignMoments quantile_design_moments(double q, double pi_e) {
  if (!(pi_e > 0.0 && pi_e < 1.0)) {
    throw std::invalid_argument("quantile_design_moments: pi_e must be in (0,1)");
  }
  if (!(q >= 0.5 * pi_e && q <= 0.5)) {
    throw std::invalid_argument("quantile_design_moments: q must be in [pi_e/2, 0.5]");
  }
  QuantileDesignMoments m;
  m.var_z_e = two_sided_tail_variance(q);
  // All conditional means are zero by symmetry, so total variance splits as
  // 1 = pi_e Var(Z|E) + pi_o Var(Z|O).
  m.var_z_o = (1.0 - pi_e * m.var_z_e) / (1.0 - pi_e);
  return m;
}

MomentProfile quantile_design_profile(double q, double pi_e, double gamma, double sigma_v2,
                                      double sigma2, std::int64_t n_e) {
  const QuantileDesignMoments m = quantile_design_moments(q, pi_e);
  MomentProfile p;
  p.pi_o = 1.0 - pi_e;
  p.var_z_e = m.var_z_e;
  p.var_z_o = m.var_z_o;
  p.var_x_e = 1.0;
  p.var_x_o = gamma * gamma * m.var_z_o + sigma_v2;
  p.gamma = gamma;
  p.sigma2 = sigma2;
  p.n_e = n_e;
  validate(p);
  return p;
}

}  // namespace causalfuse
