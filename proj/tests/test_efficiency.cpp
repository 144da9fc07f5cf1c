#include <doctest.h>

#include <cmath>
#include <random>

#include "causalfuse/efficiency.hpp"
#include "causalfuse/normal.hpp"
#include "causalfuse/rng.hpp"

using namespace causalfuse;

namespace {

MomentProfile unit_profile(double pi_o, double gamma) {
  MomentProfile p;
  p.pi_o = pi_o;
  p.gamma = gamma;
  p.sigma2 = 0.84;
  p.n_e = 100;
  return p;
}

}  // namespace

TEST_CASE("no observational data reduces to the experiment-only variance") {
  MomentProfile p = unit_profile(0.0, 0.95);
  CHECK(asymptotic_var_gmm(p) == doctest::Approx(0.84 / 100.0).epsilon(1e-14));
  CHECK(efficiency_ratio(p) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("benchmark profile gives the hand-computed ratio") {
  const MomentProfile p = unit_profile(0.95, 0.95);
  const double ratio = efficiency_ratio(p);
  CHECK(ratio == doctest::Approx(1.0 + 0.95 * 0.9025).epsilon(1e-12));  // 1.857375
  CHECK(asymptotic_var_gmm(p) == doctest::Approx(0.84 / 100.0 / 1.857375).epsilon(1e-12));
}

TEST_CASE("irrelevant Z gives no gain") {
  CHECK(efficiency_ratio(unit_profile(0.95, 0.0)) == doctest::Approx(1.0));
}

TEST_CASE("under identical variances and perfect relevance the ratio is 1 + pi_o") {
  for (double pi_o : {0.1, 0.5, 0.9, 0.99}) {
    MomentProfile p = unit_profile(pi_o, 1.0);  // gamma^2 Var(Z|O) = Var(X|O)
    const double r = efficiency_ratio(p);
    CHECK(r == doctest::Approx(1.0 + pi_o).epsilon(1e-12));
    CHECK(r >= 1.0);
    CHECK(r < 2.0);
  }
}

TEST_CASE("ratio times gmm variance recovers the experiment-only variance") {
  std::mt19937_64 rng = make_stream(5, 0);
  for (int i = 0; i < 200; ++i) {
    MomentProfile p;
    p.pi_o = 0.98 * uniform01(rng);
    p.gamma = 2.0 * uniform01(rng) - 1.0;
    p.var_x_e = 0.2 + 2.0 * uniform01(rng);
    p.var_x_o = 0.2 + 2.0 * uniform01(rng);
    p.var_z_e = 0.2 + 4.0 * uniform01(rng);
    p.var_z_o = 0.2 + 2.0 * uniform01(rng);
    p.sigma2 = 0.3 + uniform01(rng);
    p.n_e = 50;
    const double lhs = asymptotic_var_gmm(p) * efficiency_ratio(p);
    const double rhs = p.sigma2 / static_cast<double>(p.n_e) / p.var_x_e;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(efficiency_ratio(p) >= 1.0);
  }
}

TEST_CASE("ratio is strictly increasing in pi_o, gamma^2, and Var(Z|E)") {
  std::mt19937_64 rng = make_stream(6, 0);
  for (int i = 0; i < 100; ++i) {
    MomentProfile p;
    p.pi_o = 0.1 + 0.7 * uniform01(rng);
    p.gamma = 0.2 + 0.7 * uniform01(rng);
    p.var_x_e = 0.5 + uniform01(rng);
    p.var_x_o = 0.5 + uniform01(rng);
    p.var_z_e = 0.5 + uniform01(rng);
    p.var_z_o = 0.5 + uniform01(rng);
    p.sigma2 = 1.0;
    p.n_e = 100;
    const double base = efficiency_ratio(p);
    MomentProfile q = p;
    q.pi_o += 0.05;
    CHECK(efficiency_ratio(q) > base);
    q = p;
    q.gamma *= 1.1;
    CHECK(efficiency_ratio(q) > base);
    q = p;
    q.var_z_e *= 1.1;
    CHECK(efficiency_ratio(q) > base);
  }
}

TEST_CASE("design limit ratio") {
  CHECK(design_limit_ratio(1.0, 1.0) == doctest::Approx(2.0));
  CHECK(design_limit_ratio(5.58, 0.759) == doctest::Approx(1.0 + 5.58 / 0.759).epsilon(1e-12));
  CHECK(design_limit_ratio(5.58, 0.759) == doctest::Approx(8.35).epsilon(0.01));
  CHECK(design_limit_ratio(1e-9, 1.0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("tail variance matches numeric integration") {
  // Simpson quadrature of z^2 phi(z) over the upper tail against the
  // closed-form Mills expression.
  auto quad = [](double q) {
    const double c = norm_quantile(1.0 - q);
    const double hi = 12.0;
    const int n = 20000;
    const double h = (hi - c) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = c + i * h;
      const double f = z * z * norm_pdf(z);
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      acc += w * f;
    }
    return acc * h / 3.0 / q;
  };
  for (double q : {0.025, 0.05, 0.1, 0.25, 0.4}) {
    CHECK(two_sided_tail_variance(q) == doctest::Approx(quad(q)).epsilon(1e-8));
  }
  CHECK(two_sided_tail_variance(0.5) == doctest::Approx(1.0));
}

TEST_CASE("quantile design moments at the benchmark point") {
  const QuantileDesignMoments m = quantile_design_moments(0.025, 0.05);
  CHECK(m.var_z_e == doctest::Approx(5.58).epsilon(0.002));
  CHECK(m.var_z_o == doctest::Approx(0.759).epsilon(0.002));
  // literal-gamma profile reproduces the hand-derived ratio ~4.6
  const MomentProfile p = quantile_design_profile(0.025, 0.05, 0.95, 1.0 - 0.95 * 0.95, 0.84, 100);
  CHECK(efficiency_ratio(p) == doctest::Approx(4.63).epsilon(0.01));
  CHECK(1.0 / efficiency_ratio(p) == doctest::Approx(0.22).epsilon(0.03));
}

TEST_CASE("profile validation") {
  MomentProfile p = unit_profile(0.5, 0.9);
  p.var_z_o = 0.0;
  CHECK_THROWS_AS(efficiency_ratio(p), std::invalid_argument);
  p = unit_profile(1.0, 0.9);
  CHECK_THROWS_AS(efficiency_ratio(p), std::invalid_argument);
}
