#include <doctest.h>

#include <cmath>
#include <sstream>

#include "causalfuse/sim_config_text.hpp"
#include "causalfuse/simulation.hpp"
#include "support/test_util.hpp"

using namespace causalfuse;

TEST_CASE("config defaults and validation") {
  SimulationConfig cfg = test::literal_config();
  const SimulationConfig r = cfg.resolved();
  CHECK(r.sigma_v2 == doctest::Approx(1.0 - 0.95 * 0.95).epsilon(1e-14));
  CHECK(r.cov_uv == doctest::Approx(0.4 * std::sqrt(r.sigma_v2)).epsilon(1e-14));
  CHECK(r.n_o_target() == 1900);

  SUBCASE("non-PSD latent covariance fails fast") {
    cfg.var_u = 0.5;
    cfg.rho_zu_e = 0.9;  // 0.9 > sqrt(0.5)
    try {
      (void)cfg.resolved();
      FAIL("expected InvalidConfig");
    } catch (const ValidationError& e) {
      CHECK(e.name() == "InvalidConfig");
    }
  }
  SUBCASE("quantile design needs q >= pi_e/2") {
    cfg.assignment = DesignRule::quantile_tails(0.01);
    CHECK_THROWS_AS((void)cfg.resolved(), ValidationError);
  }
  SUBCASE("quantile design rejects group-specific covariances") {
    cfg.assignment = DesignRule::quantile_tails(0.2);
    cfg.rho_zu_o = 0.1;
    CHECK_THROWS_AS((void)cfg.resolved(), ValidationError);
  }
}

TEST_CASE("groupwise latent moments match the target covariance") {
  SimulationConfig cfg = test::baseline_config(400);
  cfg.n_e = 200000;
  cfg.pi_e = 0.2;  // one million latent draws total would be 1e6; use 1e6 = n_e/pi_e
  const DrawnSample s = draw_sample_detailed(cfg, 0);
  const auto& recs = s.data.records();
  const std::size_t n = recs.size();
  REQUIRE(n == 1000000);

  double mz = 0, mu = 0, mv = 0;
  std::size_t n_e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recs[i].g == Group::E) ++n_e;
  }
  // moments within the O group against the configured covariance
  double czz = 0, cuu = 0, cvv = 0, czu = 0, czv = 0, cuv = 0;
  std::size_t n_o = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recs[i].g != Group::O) continue;
    ++n_o;
    mz += recs[i].z;
    mu += s.u[i];
    mv += s.v[i];
  }
  mz /= n_o;
  mu /= n_o;
  mv /= n_o;
  for (std::size_t i = 0; i < n; ++i) {
    if (recs[i].g != Group::O) continue;
    const double z = recs[i].z - mz, u = s.u[i] - mu, v = s.v[i] - mv;
    czz += z * z;
    cuu += u * u;
    cvv += v * v;
    czu += z * u;
    czv += z * v;
    cuv += u * v;
  }
  const double dn = static_cast<double>(n_o);
  // 3 MC standard errors; se(cov(a,b)) ~ sqrt((vaa*vbb + vab^2)/n)
  auto se = [&](double vaa, double vbb, double vab) {
    return 3.0 * std::sqrt((vaa * vbb + vab * vab) / dn);
  };
  const double sv2 = cfg.sigma_v2, vu = cfg.var_u;
  CHECK(std::abs(czz / dn - 1.0) < se(1, 1, 1) * 1.5);
  CHECK(std::abs(cuu / dn - vu) < se(vu, vu, vu) * 1.5);
  CHECK(std::abs(cvv / dn - sv2) < se(sv2, sv2, sv2) * 1.5);
  CHECK(std::abs(czu / dn - 0.4) < se(1, vu, 0.4));
  CHECK(std::abs(czv / dn - 0.0) < se(1, sv2, 0));
  CHECK(std::abs(cuv / dn - 0.4 * std::sqrt(sv2)) < se(vu, sv2, 0.4 * std::sqrt(sv2)));
}

TEST_CASE("X and Y construction") {
  SimulationConfig cfg = test::baseline_config(401);
  cfg.theta = 1.7;
  cfg.n_e = 500;
  const DrawnSample s = draw_sample_detailed(cfg, 3);
  const auto& recs = s.data.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    // Y - b1 X - b2 Z - U = theta * X * U exactly (same U, no redraw)
    const double lhs = recs[i].y - cfg.beta1 * recs[i].x - cfg.beta2 * recs[i].z - s.u[i];
    CHECK(lhs == doctest::Approx(cfg.theta * recs[i].x * s.u[i]).epsilon(1e-12).scale(1.0));
    if (recs[i].g == Group::O) {
      CHECK(recs[i].x ==
            doctest::Approx(cfg.gamma * recs[i].z + s.v[i]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("quantile tails at q = 0.5 behaves like random sampling") {
  SimulationConfig cfg = test::baseline_config(402);
  cfg.n_e = 5000;
  cfg.pi_e = 0.5;
  cfg.assignment = DesignRule::quantile_tails(0.5);
  const auto [e, o] = split(draw_sample(cfg, 0));
  const double var_z_e = (e.z.array() - e.z.mean()).square().sum() / (e.n() - 1);
  CHECK(var_z_e == doctest::Approx(1.0).epsilon(0.09));  // 3 se of a variance at n = 5000
}

TEST_CASE("all-tails design forces experimental Z beyond the outer quantile") {
  SimulationConfig cfg = test::baseline_config(403);
  cfg.n_e = 100;
  cfg.pi_e = 0.05;
  cfg.assignment = DesignRule::quantile_tails(0.025);
  const auto [e, o] = split(draw_sample(cfg, 0));
  (void)o;
  const double var_z_e = (e.z.array() - e.z.mean()).square().sum() / (e.n() - 1);
  CHECK(e.z.cwiseAbs().minCoeff() > 1.85);  // 97.5% quantile up to pool sampling error
  CHECK(var_z_e == doctest::Approx(5.58).epsilon(0.25));
}

TEST_CASE("infeasible tails design throws") {
  SimulationConfig cfg = test::baseline_config(404);
  cfg.n_e = 11;
  cfg.pi_e = 11.0 / 21.0;
  cfg.assignment = DesignRule::quantile_tails(11.0 / 42.0);
  try {
    draw_sample(cfg, 0);
    FAIL("expected InfeasibleDesign");
  } catch (const EstimationError& e) {
    CHECK(e.name() == "InfeasibleDesign");
  }
}

TEST_CASE("draws are deterministic and independent of the thread count") {
  const SimulationConfig cfg = test::baseline_config(405);
  const FusedDataset a = draw_sample(cfg, 17);
  const FusedDataset b = draw_sample(cfg, 17);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.records()[i].y == b.records()[i].y);
    CHECK(a.records()[i].x == b.records()[i].x);
  }

  const std::vector<EstimatorKind> kinds{EstimatorKind::ExperimentOnly, EstimatorKind::CombinedGMM};
  const MonteCarloSummary s1 = run_monte_carlo(cfg, kinds, 64, 1);
  const MonteCarloSummary s4 = run_monte_carlo(cfg, kinds, 64, 4);
  REQUIRE(s1.stats.size() == s4.stats.size());
  for (std::size_t i = 0; i < s1.stats.size(); ++i) {
    CHECK(s1.stats[i].bias == s4.stats[i].bias);
    CHECK(s1.stats[i].variance == s4.stats[i].variance);
    CHECK(s1.stats[i].mse == s4.stats[i].mse);
  }
}

TEST_CASE("summary identities and unbiasedness") {
  const SimulationConfig cfg = test::baseline_config(406);
  const MonteCarloSummary s = run_monte_carlo(
      cfg, {EstimatorKind::ExperimentOnly, EstimatorKind::CombinedGMM, EstimatorKind::Weighted},
      1500, 2);
  for (const auto& st : s.stats) {
    CHECK(st.mse == doctest::Approx(st.bias2 + st.variance).epsilon(1e-10));
  }
  CHECK(s.find(EstimatorKind::ExperimentOnly)->relative_mse == 1.0);
  // |bias| <= 3 MC standard errors of the mean for the unbiased estimators
  for (EstimatorKind k :
       {EstimatorKind::ExperimentOnly, EstimatorKind::CombinedGMM, EstimatorKind::Weighted}) {
    const auto* st = s.find(k);
    REQUIRE(st != nullptr);
    const double se = std::sqrt(st->variance / static_cast<double>(s.replications));
    CHECK(std::abs(st->bias) < 3 * se);
  }
  CHECK(s.find(EstimatorKind::CombinedGMM)->relative_mse <= 1.05);
}

TEST_CASE("gamma = 0 removes the gain") {
  SimulationConfig cfg = test::baseline_config(407);
  cfg.gamma = 0.0;
  cfg.sigma_v2 = -1.0;
  cfg.cov_uv = -1.0;
  const MonteCarloSummary s =
      run_monte_carlo(cfg, {EstimatorKind::ExperimentOnly, EstimatorKind::CombinedGMM}, 1500, 2);
  CHECK(s.find(EstimatorKind::CombinedGMM)->relative_mse == doctest::Approx(1.0).epsilon(0.06));
}

TEST_CASE("misspecification sweep parameters") {
  const SimulationConfig cfg = test::baseline_config(408);
  const SweepResult sw = misspecification_sweep(cfg, "theta", {0.0, 1.0},
                                                {EstimatorKind::ExperimentOnly}, 50, 1);
  CHECK(sw.summaries.size() == 2);
  CHECK_THROWS_AS(misspecification_sweep(cfg, "nope", {0.1}, {}, 50, 1), ValidationError);
}

TEST_CASE("analytic profile of the config") {
  const MomentProfile p = analytic_profile(test::baseline_config());
  CHECK(p.sigma2 == doctest::Approx(2.0 - 0.16).epsilon(1e-12));
  CHECK(p.pi_o == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(p.var_x_o == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("config text round trip") {
  SimulationConfig cfg = test::baseline_config(409);
  cfg.assignment = DesignRule::quantile_tails(0.1);
  const std::string text = sim_config_to_text(cfg.resolved());
  std::istringstream in(text);
  const SimulationConfig back = parse_sim_config(in).resolved();
  CHECK(back.gamma == cfg.gamma);
  CHECK(back.n_e == cfg.n_e);
  CHECK(back.assignment.kind == DesignRule::Kind::QuantileTails);
  CHECK(back.assignment.q == 0.1);
  CHECK(back.seed == cfg.seed);

  std::istringstream bad("nonsense = 1\n");
  CHECK_THROWS_AS(parse_sim_config(bad), ValidationError);
}
