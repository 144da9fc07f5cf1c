#include "causalfuse/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "causalfuse/estimators.hpp"
#include "causalfuse/rng.hpp"
#include "causalfuse/robustness.hpp"

namespace causalfuse {

namespace {

Eigen::Matrix3d latent_cov(const SimulationConfig& cfg, Group g) {
  const double rho = g == Group::E ? cfg.rho_zu_e : cfg.rho_zu_o;
  Eigen::Matrix3d s;
  // (Z, U, V)
  s << 1.0, rho, 0.0,
       rho, cfg.var_u, cfg.cov_uv,
       0.0, cfg.cov_uv, cfg.sigma_v2;
  return s;
}

}  // namespace

SimulationConfig SimulationConfig::resolved() const {
  SimulationConfig c = *this;
  if (c.sigma_v2 < 0.0) c.sigma_v2 = 1.0 - c.gamma * c.gamma;
  if (c.cov_uv < 0.0) c.cov_uv = 0.4 * std::sqrt(std::max(0.0, c.sigma_v2));
  if (!(c.pi_e > 0.0 && c.pi_e <= 1.0)) {
    throw ValidationError("InvalidConfig", "pi_e must be in (0,1]");
  }
  if (c.n_e < 1) {
    throw ValidationError("InvalidConfig", "n_e must be >= 1");
  }
  if (!(c.var_u > 0.0) || !(c.sigma_v2 >= 0.0)) {
    throw ValidationError("InvalidConfig", "var_u must be > 0 and sigma_v2 >= 0");
  }
  if (c.assignment.kind == DesignRule::Kind::QuantileTails) {
    if (!(c.assignment.q >= 0.5 * c.pi_e && c.assignment.q <= 0.5)) {
      throw ValidationError("InvalidConfig", "quantile design needs q in [pi_e/2, 0.5]");
    }
    if (c.rho_zu_e != c.rho_zu_o) {
      throw ValidationError("InvalidConfig",
                            "quantile design assigns by rank over a pooled draw; "
                            "group-specific rho_zu is not representable");
    }
  }
  for (Group g : {Group::E, Group::O}) {
    try {
      MvnFactor f(latent_cov(c, g));
      (void)f;
    } catch (const std::invalid_argument& e) {
      throw ValidationError("InvalidConfig",
                            std::string("latent covariance is not PSD: ") + e.what());
    }
  }
  return c;
}

std::int64_t SimulationConfig::n_o_target() const {
  const double pi_o = 1.0 - pi_e;
  return static_cast<std::int64_t>(std::llround(static_cast<double>(n_e) * pi_o / pi_e));
}

MomentProfile analytic_profile(const SimulationConfig& raw) {
  const SimulationConfig cfg = raw.resolved();
  const double sigma2 = cfg.var_u - cfg.rho_zu_e * cfg.rho_zu_e;  // Var(U - Cov(U,Z) Z)
  if (cfg.assignment.kind == DesignRule::Kind::QuantileTails) {
    return quantile_design_profile(cfg.assignment.q, cfg.pi_e, cfg.gamma, cfg.sigma_v2, sigma2,
                                   cfg.n_e);
  }
  MomentProfile p;
  p.pi_o = 1.0 - cfg.pi_e;
  p.var_x_e = 1.0;
  p.var_x_o = cfg.gamma * cfg.gamma + cfg.sigma_v2;
  p.var_z_e = 1.0;
  p.var_z_o = 1.0;
  p.gamma = cfg.gamma;
  p.sigma2 = sigma2;
  p.n_e = cfg.n_e;
  validate(p);
  return p;
}

DrawnSample draw_sample_detailed(const SimulationConfig& raw, std::uint64_t replication_index) {
  const SimulationConfig cfg = raw.resolved();
  const std::int64_t n_o = cfg.n_o_target();
  const std::int64_t n_total = cfg.n_e + n_o;

  std::mt19937_64 rng = make_stream(cfg.seed, replication_index);
  NormalSampler normal;

  DrawnSample out;
  std::vector<UnitRecord> records;
  records.reserve(static_cast<std::size_t>(n_total));
  out.u.reserve(static_cast<std::size_t>(n_total));
  out.v.reserve(static_cast<std::size_t>(n_total));

  auto outcome = [&cfg](double x, double z, double u) {
    return cfg.beta1 * x + cfg.beta2 * z + cfg.theta * x * u + u;
  };

  if (cfg.assignment.kind == DesignRule::Kind::RandomSplit) {
    // Counts are fixed; attributes are iid given the group, so drawing the E
    // block first then the O block matches Bernoulli assignment conditional
    // on the realized counts.
    const MvnFactor fe(latent_cov(cfg, Group::E));
    const MvnFactor fo(latent_cov(cfg, Group::O));
    for (std::int64_t i = 0; i < cfg.n_e; ++i) {
      const Eigen::VectorXd zuv = fe.draw(rng, normal);
      const double x = normal(rng);
      records.push_back({outcome(x, zuv[0], zuv[1]), x, zuv[0], Group::E});
      out.u.push_back(zuv[1]);
      out.v.push_back(zuv[2]);
    }
    for (std::int64_t i = 0; i < n_o; ++i) {
      const Eigen::VectorXd zuv = fo.draw(rng, normal);
      const double x = cfg.gamma * zuv[0] + zuv[2];
      records.push_back({outcome(x, zuv[0], zuv[1]), x, zuv[0], Group::O});
      out.u.push_back(zuv[1]);
      out.v.push_back(zuv[2]);
    }
    out.data = FusedDataset::from_records(std::move(records));
    return out;
  }

  // QuantileTails: draw the pool, order by Z, assign E uniformly within the
  // top/bottom q quantiles (equal assignment probability pi_e/(2q) across the
  // tails means a uniform subset of exactly n_e conditional on the count).
  const MvnFactor f(latent_cov(cfg, Group::E));
  Eigen::MatrixXd pool(n_total, 3);
  for (std::int64_t i = 0; i < n_total; ++i) {
    pool.row(i) = f.draw(rng, normal).transpose();
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(n_total));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&pool](std::int64_t a, std::int64_t b) { return pool(a, 0) < pool(b, 0); });

  const double q = cfg.assignment.q;
  std::vector<std::int64_t> tails;
  for (std::int64_t r = 0; r < n_total; ++r) {
    const double quantile = (static_cast<double>(r) + 0.5) / static_cast<double>(n_total);
    if (quantile < q || quantile > 1.0 - q) tails.push_back(order[static_cast<std::size_t>(r)]);
  }
  if (static_cast<std::int64_t>(tails.size()) < cfg.n_e) {
    throw EstimationError("InfeasibleDesign",
                          "quantile tails hold " + std::to_string(tails.size()) +
                              " units, need " + std::to_string(cfg.n_e));
  }
  // Partial Fisher-Yates: first n_e entries become the experimental draw.
  for (std::int64_t i = 0; i < cfg.n_e; ++i) {
    const auto j = i + static_cast<std::int64_t>(
                           bounded_uint(rng, static_cast<std::uint64_t>(tails.size() - i)));
    std::swap(tails[static_cast<std::size_t>(i)], tails[static_cast<std::size_t>(j)]);
  }
  std::vector<bool> is_e(static_cast<std::size_t>(n_total), false);
  for (std::int64_t i = 0; i < cfg.n_e; ++i) is_e[static_cast<std::size_t>(tails[i])] = true;

  // E rows first (pool order), then O rows.
  for (int pass = 0; pass < 2; ++pass) {
    const bool want_e = pass == 0;
    for (std::int64_t i = 0; i < n_total; ++i) {
      if (is_e[static_cast<std::size_t>(i)] != want_e) continue;
      const double z = pool(i, 0), u = pool(i, 1), v = pool(i, 2);
      const double x = want_e ? normal(rng) : cfg.gamma * z + v;
      records.push_back({outcome(x, z, u), x, z, want_e ? Group::E : Group::O});
      out.u.push_back(u);
      out.v.push_back(v);
    }
  }
  out.data = FusedDataset::from_records(std::move(records));
  return out;
}

FusedDataset draw_sample(const SimulationConfig& cfg, std::uint64_t replication_index) {
  return draw_sample_detailed(cfg, replication_index).data;
}

std::string_view estimator_kind_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ExperimentOnly: return "experiment-only";
    case EstimatorKind::CombinedGMM: return "gmm";
    case EstimatorKind::ObsOLS: return "obs-ols";
    case EstimatorKind::ObsIV: return "obs-iv";
    case EstimatorKind::BiasCorrectedObs: return "bias-corrected";
    case EstimatorKind::Weighted: return "weighted";
    case EstimatorKind::WeightedCV: return "weighted-cv";
    case EstimatorKind::Regularized: return "regularized-cv";
  }
  return "unknown";
}

std::optional<EstimatorKind> estimator_kind_from_name(std::string_view name) {
  for (EstimatorKind k :
       {EstimatorKind::ExperimentOnly, EstimatorKind::CombinedGMM, EstimatorKind::ObsOLS,
        EstimatorKind::ObsIV, EstimatorKind::BiasCorrectedObs, EstimatorKind::Weighted,
        EstimatorKind::WeightedCV, EstimatorKind::Regularized}) {
    if (estimator_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

const EstimatorStats* MonteCarloSummary::find(EstimatorKind k) const {
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    if (estimators[i] == k) return &stats[i];
  }
  return nullptr;
}

namespace {

double run_one(EstimatorKind kind, const FusedDataset& ds) {
  switch (kind) {
    case EstimatorKind::ExperimentOnly: return estimate_experiment_only(ds).beta1_hat;
    case EstimatorKind::CombinedGMM: return gmm_combine(ds).beta1_hat;
    case EstimatorKind::ObsOLS: return estimate_obs_ols(ds).beta1_hat;
    case EstimatorKind::ObsIV: return estimate_obs_iv(ds).beta1_hat;
    case EstimatorKind::BiasCorrectedObs: return estimate_bias_corrected(ds).beta1_hat;
    case EstimatorKind::Weighted: return estimate_weighted(ds).beta1_hat;
    case EstimatorKind::WeightedCV: return cv_gated_weighted(ds).beta1;
    case EstimatorKind::Regularized: {
      const CVResult cv = tune_lambda(ds, default_lambda_grid());
      return estimate_regularized(ds, cv.grid[cv.selected]).beta1_hat;
    }
  }
  throw EstimationError("UnknownEstimator", "unknown estimator kind");
}

}  // namespace

MonteCarloSummary run_monte_carlo(const SimulationConfig& raw,
                                  std::vector<EstimatorKind> estimators,
                                  std::int64_t replications, int threads) {
  const SimulationConfig cfg = raw.resolved();
  if (replications < 2) {
    throw ValidationError("InvalidConfig", "replications must be >= 2");
  }
  if (std::find(estimators.begin(), estimators.end(), EstimatorKind::ExperimentOnly) ==
      estimators.end()) {
    estimators.insert(estimators.begin(), EstimatorKind::ExperimentOnly);
  }
  const std::size_t n_est = estimators.size();
  const auto reps = static_cast<std::size_t>(replications);

  // estimates[e][r]; NaN marks a per-replication failure.
  std::vector<std::vector<double>> estimates(n_est, std::vector<double>(reps));

  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const FusedDataset ds = draw_sample(cfg, static_cast<std::uint64_t>(r));
      for (std::size_t e = 0; e < n_est; ++e) {
        try {
          estimates[e][r] = run_one(estimators[e], ds);
        } catch (const EstimationError&) {
          estimates[e][r] = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
  };

  const int nthreads = std::max(1, threads);
  if (nthreads == 1) {
    worker(0, reps);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (reps + static_cast<std::size_t>(nthreads) - 1) /
                              static_cast<std::size_t>(nthreads);
    for (int t = 0; t < nthreads; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * chunk;
      const std::size_t end = std::min(reps, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  // Reduce in replication order; identical for any thread count.
  MonteCarloSummary summary;
  summary.estimators = estimators;
  summary.stats.resize(n_est);
  summary.replications = replications;
  for (std::size_t e = 0; e < n_est; ++e) {
    double sum = 0.0;
    std::int64_t ok = 0, failures = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const double v = estimates[e][r];
      if (std::isnan(v)) {
        ++failures;
      } else {
        sum += v;
        ++ok;
      }
    }
    if (failures * 100 >= replications) {
      throw EstimationError("TooManyFailures",
                            std::string(estimator_kind_name(estimators[e])) + " failed in " +
                                std::to_string(failures) + "/" + std::to_string(replications) +
                                " replications");
    }
    const double mean = sum / static_cast<double>(ok);
    double var = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const double v = estimates[e][r];
      if (!std::isnan(v)) {
        var += (v - mean) * (v - mean);
      }
    }
    var /= static_cast<double>(ok);  // population variance so mse == bias^2 + var exactly
    EstimatorStats& st = summary.stats[e];
    st.bias = mean - cfg.beta1;
    st.bias2 = st.bias * st.bias;
    st.variance = var;
    st.mse = st.bias2 + st.variance;
    st.failures = failures;
  }
  const double mse_e = summary.find(EstimatorKind::ExperimentOnly)->mse;
  for (auto& st : summary.stats) {
    st.relative_mse = st.mse / mse_e;
    st.efficiency_gain = 1.0 - st.relative_mse;
  }
  return summary;
}

SweepResult misspecification_sweep(const SimulationConfig& cfg, const std::string& parameter,
                                   const std::vector<double>& values,
                                   std::vector<EstimatorKind> estimators,
                                   std::int64_t replications, int threads) {
  SweepResult out;
  out.parameter = parameter;
  out.values = values;
  for (double v : values) {
    SimulationConfig c = cfg;
    if (parameter == "pi_o") {
      c.pi_e = 1.0 - v;
    } else if (parameter == "gamma") {
      c.gamma = v;
      c.sigma_v2 = -1.0;  // keep the equal-X-variance default in the sweep
      c.cov_uv = -1.0;
    } else if (parameter == "theta") {
      c.theta = v;
    } else if (parameter == "rho_zu_o") {
      c.rho_zu_o = v;
    } else if (parameter == "q") {
      c.assignment = DesignRule::quantile_tails(v);
    } else {
      throw ValidationError("InvalidConfig", "unknown sweep parameter '" + parameter + "'");
    }
    out.summaries.push_back(run_monte_carlo(c, estimators, replications, threads));
  }
  return out;
}

}  // namespace causalfuse
