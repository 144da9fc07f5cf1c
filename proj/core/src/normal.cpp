#include "causalfuse/normal.hpp"

#include <cmath>
#include <stdexcept>

namespace causalfuse {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

double norm_pdf(double t) { return std::exp(-0.5 * t * t - 0.5 * kLog2Pi); }

double norm_cdf(double t) { return 0.5 * std::erfc(-t / kSqrt2); }

double log_norm_cdf(double t) {
  if (t > -1.0) {
    // log(1 - Phi(-t)) without cancellation near 1
    return std::log1p(-0.5 * std::erfc(t / kSqrt2));
  }
  if (t > -26.0) {
    return std::log(0.5 * std::erfc(-t / kSqrt2));
  }
  // Asymptotic expansion of the left tail; erfc underflows below ~-37.
  const double t2 = t * t;
  return -0.5 * t2 - 0.5 * kLog2Pi - std::log(-t) + std::log1p(-1.0 / t2 + 3.0 / (t2 * t2));
}

double inverse_mills(double t) {
  // exp(log phi - log Phi) stays finite where the direct ratio overflows
  return std::exp(-0.5 * t * t - 0.5 * kLog2Pi - log_norm_cdf(t));
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("norm_quantile: p must be in (0,1)");
  }
  // Acklam rational approximation
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF
  const double e = norm_cdf(x) - p;
  const double u = e / norm_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace causalfuse
