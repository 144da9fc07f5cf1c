#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "causalfuse/estimators.hpp"
#include "causalfuse/robustness.hpp"
#include "causalfuse/rng.hpp"
#include "causalfuse/simulation.hpp"
#include "support/test_util.hpp"

using namespace causalfuse;

namespace {

FoldEstimator ols2_fold() {
  return [](const DataBlock& fold) {
    const Ols2Fit f = ols2(fold);
    return std::make_pair(f.beta1, f.b2);
  };
}

}  // namespace

TEST_CASE("noiseless data has zero LOOCV error") {
  std::mt19937_64 rng = make_stream(1, 0);
  NormalSampler normal;
  std::vector<UnitRecord> recs;
  for (int i = 0; i < 30; ++i) {
    UnitRecord r;
    r.x = normal(rng);
    r.z = normal(rng);
    r.y = 0.1 * r.x + 0.5 * r.z;
    r.g = Group::E;
    recs.push_back(r);
  }
  recs.push_back({1, 1, 1, Group::O});
  const auto ds = FusedDataset::from_records(recs);
  CHECK(loocv_error(ds, ols2_fold()) < 1e-20);
}

TEST_CASE("naive LOOCV equals the hat-matrix identity for OLS") {
  const FusedDataset ds = test::random_dataset(200, 60, 10);
  const double naive = loocv_error(ds, ols2_fold());

  // leverage shortcut on the intercept design [1 x z]
  const auto [e, o] = split(ds);
  (void)o;
  const Eigen::Index n = e.n();
  Eigen::MatrixXd m(n, 3);
  m.col(0).setOnes();
  m.col(1) = e.x;
  m.col(2) = e.z;
  const Eigen::Matrix3d mtm_inv = (m.transpose() * m).inverse();
  const Eigen::Vector3d coef = mtm_inv * (m.transpose() * e.y);
  const Eigen::VectorXd resid = e.y - m * coef;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = m.row(i) * mtm_inv * m.row(i).transpose();
    const double d = resid[i] / (1.0 - h);
    acc += d * d;
  }
  const double shortcut = acc / static_cast<double>(n);
  CHECK(naive == doctest::Approx(shortcut).epsilon(1e-10));
}

TEST_CASE("loocv requires enough experimental rows") {
  std::vector<UnitRecord> recs{{1, 1, 0, Group::E}, {2, 2, 1, Group::E}, {3, 1, 2, Group::E},
                               {1, 1, 1, Group::O}};
  const auto ds = FusedDataset::from_records(recs);
  try {
    loocv_error(ds, ols2_fold());
    FAIL("expected DegenerateFold");
  } catch (const EstimationError& e) {
    CHECK(e.name() == "DegenerateFold");
  }
}

TEST_CASE("loocv is invariant to record order") {
  const FusedDataset ds = test::random_dataset(201, 40, 80);
  std::vector<UnitRecord> shuffled = ds.records();
  std::mt19937_64 rng = make_stream(202, 0);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[bounded_uint(rng, i)]);
  }
  const auto ds2 = FusedDataset::from_records(shuffled);
  const double a = loocv_error(ds, ols2_fold());
  const double b = loocv_error(ds2, ols2_fold());
  CHECK(a == doctest::Approx(b).epsilon(1e-12));

  const auto grid = default_weight_grid();
  const CVResult ca = tune_weight(ds, grid);
  const CVResult cb = tune_weight(ds2, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(ca.cv_error[i] == doctest::Approx(cb.cv_error[i]).epsilon(1e-12));
  }
}

TEST_CASE("tune_weight on a singleton grid") {
  const FusedDataset ds = test::random_dataset(203, 30, 60);
  const CVResult r = tune_weight(ds, {0.0});
  CHECK(r.selected == 0);
  CHECK(r.grid[r.selected] == 0.0);
}

TEST_CASE("tune_weight rejects weights outside [0,1]") {
  const FusedDataset ds = test::random_dataset(204, 30, 60);
  CHECK_THROWS_AS(tune_weight(ds, {0.5, 1.5}), ValidationError);
  CHECK_THROWS_AS(tune_weight(ds, {}), ValidationError);
}

TEST_CASE("selected index is always the grid argmin") {
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    const FusedDataset ds = test::random_dataset(seed, 25, 50);
    const CVResult r = tune_weight(ds, default_weight_grid());
    const double lo = *std::min_element(r.cv_error.begin(), r.cv_error.end());
    CHECK(r.cv_error[r.selected] == lo);
    const CVResult l = tune_lambda(ds, {0.0, 1.0, 10.0});
    CHECK(l.cv_error[l.selected] == *std::min_element(l.cv_error.begin(), l.cv_error.end()));
  }
}

TEST_CASE("well-specified tails design selects a weight above one half") {
  // the inverse-variance oracle weight is ~0.8 under this design; the CV
  // argmin is noisy per dataset, so check the selection across replications
  SimulationConfig cfg = test::baseline_config(205);
  cfg.n_e = 200;
  cfg.assignment = DesignRule::quantile_tails(0.05);
  double sum = 0.0;
  const int reps = 15;
  for (int r = 0; r < reps; ++r) {
    const CVResult cv = tune_weight(draw_sample(cfg, r), default_weight_grid());
    sum += cv.grid[cv.selected];
  }
  CHECK(sum / reps > 0.5);
}

TEST_CASE("severely misspecified O data selects a weight near zero") {
  SimulationConfig cfg = test::baseline_config(206);
  cfg.rho_zu_o = 0.0;  // correlation difference 0.4
  const FusedDataset ds = draw_sample(cfg, 2);
  const CVResult r = tune_weight(ds, default_weight_grid());
  CHECK(r.grid[r.selected] <= 0.15);
}

TEST_CASE("tune_lambda endpoints") {
  SUBCASE("singleton grid") {
    const FusedDataset ds = test::random_dataset(207, 30, 60);
    const CVResult r = tune_lambda(ds, {3.5});
    CHECK(r.selected == 0);
  }
  SUBCASE("well-specified data with a huge O block pushes lambda to the top") {
    SimulationConfig cfg = test::baseline_config(208);
    cfg.n_e = 60;
    cfg.pi_e = 0.004;  // n_o = 14940
    const auto grid = default_lambda_grid();
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
      const CVResult r = tune_lambda(draw_sample(cfg, rep), grid);
      // top of the grid: one of the last few entries (1e3, ..., 1e4, inf)
      CHECK(r.selected + 4 >= grid.size());
    }
  }
  SUBCASE("a badly violated constraint keeps lambda near the bottom of the grid") {
    SimulationConfig cfg = test::baseline_config(209);
    cfg.rho_zu_o = -0.4;  // constraint target far from the truth
    const auto grid = default_lambda_grid();
    // per-dataset argmin is noisy among the tiny-shrinkage points, so check
    // the median selection: orders of magnitude below the 1e4/inf top, where
    // the pull toward the wrong constraint is negligible against n_E
    std::vector<double> sel;
    for (std::uint64_t rep = 0; rep < 15; ++rep) {
      const CVResult r = tune_lambda(draw_sample(cfg, rep), grid);
      sel.push_back(r.grid[r.selected]);
    }
    std::nth_element(sel.begin(), sel.begin() + sel.size() / 2, sel.end());
    CHECK(sel[sel.size() / 2] <= 10.0);
  }
}

TEST_CASE("gated weighting keeps the experiment-only estimate under misspecification") {
  SimulationConfig cfg = test::baseline_config(210);
  cfg.rho_zu_o = 0.0;
  int accepted = 0;
  for (std::uint64_t rep = 0; rep < 40; ++rep) {
    const GatedWeightFit f = cv_gated_weighted(draw_sample(cfg, rep));
    if (f.accepted) ++accepted;
  }
  CHECK(accepted <= 8);  // rarely accepts the contaminated weight
}

TEST_CASE("gated weighting accepts informative observational data") {
  SimulationConfig cfg = test::baseline_config(211);
  cfg.n_e = 200;
  cfg.assignment = DesignRule::quantile_tails(0.05);
  int accepted = 0;
  for (std::uint64_t rep = 0; rep < 40; ++rep) {
    const GatedWeightFit f = cv_gated_weighted(draw_sample(cfg, rep));
    if (f.accepted) ++accepted;
  }
  CHECK(accepted >= 20);
}
