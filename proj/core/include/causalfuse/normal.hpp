#pragma once

namespace causalfuse {

// Standard normal helpers. log_norm_cdf stays finite for |t| <= 40.

double norm_pdf(double t);
double norm_cdf(double t);
double log_norm_cdf(double t);

// phi(t) / Phi(t), stable in the far left tail.
double inverse_mills(double t);

// Quantile of the standard normal (Acklam-style rational approximation
// refined with one Halley step; ~1e-15 absolute accuracy).
double norm_quantile(double p);

}  // namespace causalfuse
