#include "causalfuse/estimators.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "causalfuse/rng.hpp"

namespace causalfuse {

namespace {

struct Demeaned {
  Eigen::VectorXd y, x, z;
  double mean_y = 0.0, mean_x = 0.0, mean_z = 0.0;
};

Demeaned demean(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  Demeaned d;
  d.mean_y = y.mean();
  d.mean_x = x.mean();
  d.mean_z = z.mean();
  d.y = y.array() - d.mean_y;
  d.x = x.array() - d.mean_x;
  d.z = z.array() - d.mean_z;
  return d;
}

void check_conditioning(const Eigen::Matrix2d& mtm, double tol, const char* where) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(mtm);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(1);
  if (!(lo > tol * hi) || !(hi > 0.0)) {
    throw EstimationError("SingularDesign",
                          std::string(where) + ": cross-product matrix is singular "
                          "(eigenvalues " + std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
}

ObsStats obs_point_estimates(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& z, const EstimatorOptions& opts) {
  const auto d = demean(y, x, z);
  const double sxz = d.x.dot(d.z);
  const double szz = d.z.squaredNorm();
  const double sxx = d.x.squaredNorm();
  if (!(szz > 0.0)) {
    throw EstimationError("DegenerateZ", "observational Z is constant");
  }
  const double corr = sxz / std::sqrt(sxx * szz);
  if (!(std::abs(corr) > opts.weak_first_stage_tol)) {
    throw EstimationError("WeakFirstStage",
                          "corr(X,Z|O) = " + std::to_string(corr) + " is below the guard");
  }
  ObsStats s;
  s.b_iv = d.z.dot(d.y) / sxz;
  s.gamma = sxz / szz;
  return s;
}

}  // namespace

Ols2Fit ols2(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
             const EstimatorOptions& opts) {
  const Eigen::Index n = y.size();
  if (n < 3 || x.size() != n || z.size() != n) {
    throw EstimationError("SingularDesign",
                          "ols2: needs at least 3 rows of equal length, got " + std::to_string(n));
  }
  const auto d = demean(y, x, z);
  Eigen::Matrix2d mtm;
  mtm << d.x.squaredNorm(), d.x.dot(d.z), d.x.dot(d.z), d.z.squaredNorm();
  check_conditioning(mtm, opts.singular_tol, "ols2");
  Eigen::Vector2d mty(d.x.dot(d.y), d.z.dot(d.y));
  const Eigen::Matrix2d inv = mtm.inverse();
  const Eigen::Vector2d beta = inv * mty;

  Ols2Fit fit;
  fit.beta1 = beta(0);
  fit.b2 = beta(1);
  fit.mean_y = d.mean_y;
  fit.mean_x = d.mean_x;
  fit.mean_z = d.mean_z;
  const double rss = std::max(0.0, d.y.squaredNorm() - beta.dot(mty));
  fit.sigma2 = rss / static_cast<double>(n - 2);
  fit.var = fit.sigma2 * inv;
  return fit;
}

Ols2Fit ols2(const DataBlock& block, const EstimatorOptions& opts) {
  return ols2(block.y, block.x, block.z, opts);
}

double incorrect_iv(const DataBlock& obs, const EstimatorOptions& opts) {
  return obs_point_estimates(obs.y, obs.x, obs.z, opts).b_iv;
}

FirstStageFit first_stage(const DataBlock& obs) {
  const Eigen::Index n = obs.n();
  if (n < 2) {
    throw EstimationError("DegenerateZ", "first_stage: needs at least 2 rows");
  }
  const auto d = demean(obs.y, obs.x, obs.z);
  const double szz = d.z.squaredNorm();
  if (!(szz > 0.0)) {
    throw EstimationError("DegenerateZ", "first_stage: Var(Z|O) = 0");
  }
  FirstStageFit f;
  f.gamma = d.x.dot(d.z) / szz;
  const double rss = std::max(0.0, d.x.squaredNorm() - f.gamma * f.gamma * szz);
  f.sigma_v2 = n > 2 ? rss / static_cast<double>(n - 2) : 0.0;
  f.var_gamma = f.sigma_v2 / szz;
  return f;
}

ObsStats obs_stats(const DataBlock& obs, ObsCovMode mode, int bootstrap_draws,
                   std::uint64_t bootstrap_seed, const EstimatorOptions& opts) {
  ObsStats s = obs_point_estimates(obs.y, obs.x, obs.z, opts);
  const Eigen::Index n = obs.n();
  const auto d = demean(obs.y, obs.x, obs.z);
  const double sxz = d.x.dot(d.z);
  const double szz = d.z.squaredNorm();

  if (mode == ObsCovMode::InfluenceFunction) {
    // psi_biv,i = z_i (y_i - b_iv x_i) / Sxz ; psi_gamma,i = z_i (x_i - gamma z_i) / Szz
    const Eigen::VectorXd e_iv = d.y - s.b_iv * d.x;
    const Eigen::VectorXd v_res = d.x - s.gamma * d.z;
    const Eigen::VectorXd psi_b = d.z.cwiseProduct(e_iv) / sxz;
    const Eigen::VectorXd psi_g = d.z.cwiseProduct(v_res) / szz;
    s.cov(0, 0) = psi_b.squaredNorm();
    s.cov(1, 1) = psi_g.squaredNorm();
    s.cov(0, 1) = s.cov(1, 0) = psi_b.dot(psi_g);
    return s;
  }

  // Bootstrap: resample O rows with replacement, empirical covariance of
  // (b_iv, gamma) over the draws.
  std::mt19937_64 rng = make_stream(bootstrap_seed, 0x0b00);
  std::vector<Eigen::Vector2d> draws;
  draws.reserve(static_cast<std::size_t>(bootstrap_draws));
  Eigen::VectorXd by(n), bx(n), bz(n);
  for (int b = 0; b < bootstrap_draws; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<Eigen::Index>(bounded_uint(rng, static_cast<std::uint64_t>(n)));
      by[i] = obs.y[j];
      bx[i] = obs.x[j];
      bz[i] = obs.z[j];
    }
    try {
      const ObsStats bs = obs_point_estimates(by, bx, bz, opts);
      draws.emplace_back(bs.b_iv, bs.gamma);
    } catch (const EstimationError&) {
      // degenerate resample, skip
    }
  }
  if (draws.size() < 2) {
    throw EstimationError("WeakFirstStage", "bootstrap: too few valid resamples");
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& v : draws) mean += v;
  mean /= static_cast<double>(draws.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& v : draws) cov += (v - mean) * (v - mean).transpose();
  s.cov = cov / static_cast<double>(draws.size() - 1);
  return s;
}

BiasCorrectedFit bias_corrected_obs(const ObsStats& obs, double b2_hat_e, double var_b2_e,
                                    const EstimatorOptions& opts) {
  if (!(std::abs(obs.gamma) > opts.weak_first_stage_tol)) {
    throw EstimationError("WeakFirstStage",
                          "bias_corrected_obs: gamma_hat = " + std::to_string(obs.gamma));
  }
  const double g = obs.gamma;
  BiasCorrectedFit f;
  f.beta1 = obs.b_iv - b2_hat_e / g;
  // delta method for f(b_iv, gamma, b2) = b_iv - b2/gamma; b2 is independent
  // of the O-block statistics.
  const double g2 = g * g;
  f.var_beta1 = obs.cov(0, 0) + var_b2_e / g2 + b2_hat_e * b2_hat_e * obs.cov(1, 1) / (g2 * g2) +
                2.0 * (b2_hat_e / g2) * obs.cov(0, 1);
  f.var_beta1 = std::max(f.var_beta1, 0.0);
  return f;
}

WeightedCombine weighted_combine(double beta1_e, double var_e, double beta1_o, double var_o) {
  if (!(var_e > 0.0) || !(var_o > 0.0)) {
    throw EstimationError("NonpositiveVariance",
                          "weighted_combine: var_E = " + std::to_string(var_e) +
                              ", var_O = " + std::to_string(var_o));
  }
  WeightedCombine w;
  w.w_o = var_e / (var_e + var_o);
  w.w_e = var_o / (var_e + var_o);
  w.beta1 = w.w_o * beta1_o + w.w_e * beta1_e;
  w.var_beta1 = w.w_o * w.w_o * var_o + w.w_e * w.w_e * var_e;
  return w;
}

RegularizedFit regularized_regression(const DataBlock& exp, double b_iv, double gamma,
                                      double lambda, const EstimatorOptions& opts) {
  if (!(std::abs(gamma) > opts.weak_first_stage_tol)) {
    throw EstimationError("WeakFirstStage",
                          "regularized_regression: gamma_hat = " + std::to_string(gamma));
  }
  if (std::isnan(lambda) || lambda < 0.0) {
    throw ValidationError("InvalidHyperparameter",
                          "regularized_regression: lambda must be >= 0 or inf");
  }
  const Eigen::Index n = exp.n();
  if (n < 3) {
    throw EstimationError("SingularDesign", "regularized_regression: needs at least 3 E rows");
  }
  const auto d = demean(exp.y, exp.x, exp.z);
  RegularizedFit fit;

  if (std::isinf(lambda)) {
    // Constrained least squares: substitute beta1 = b_iv - b2/gamma and
    // regress (y - b_iv x) on w = z - x/gamma.
    const Eigen::VectorXd w = d.z - d.x / gamma;
    const double sww = w.squaredNorm();
    if (!(sww > opts.singular_tol * (d.z.squaredNorm() + d.x.squaredNorm() / (gamma * gamma)))) {
      throw EstimationError("SingularDesign", "regularized_regression: constrained design is flat");
    }
    fit.b2 = w.dot(d.y - b_iv * d.x) / sww;
    fit.beta1 = b_iv - fit.b2 / gamma;
    fit.constraint_residual = b_iv - fit.beta1 - fit.b2 / gamma;
    return fit;
  }

  // Augment the demeaned design with the pseudo-row sqrt(l) * (1, 1/gamma)
  // and pseudo-outcome sqrt(l) * b_iv.
  Eigen::Matrix2d mtm;
  mtm << d.x.squaredNorm(), d.x.dot(d.z), d.x.dot(d.z), d.z.squaredNorm();
  Eigen::Vector2d rhs(d.x.dot(d.y), d.z.dot(d.y));
  const Eigen::Vector2d dir(1.0, 1.0 / gamma);
  mtm += lambda * dir * dir.transpose();
  rhs += lambda * b_iv * dir;
  check_conditioning(mtm, opts.singular_tol, "regularized_regression");
  const Eigen::Vector2d beta = mtm.inverse() * rhs;
  fit.beta1 = beta(0);
  fit.b2 = beta(1);
  fit.constraint_residual = b_iv - fit.beta1 - fit.b2 / gamma;
  return fit;
}

MomentSystem build_moment_system(const FusedDataset& ds, const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  if (e.n() < 3) {
    throw EstimationError("SingularDesign", "gmm: needs at least 3 experimental rows");
  }
  const auto de = demean(e.y, e.x, e.z);
  const double sxx = de.x.squaredNorm();
  const double sxz = de.x.dot(de.z);
  const double szz = de.z.squaredNorm();
  Eigen::Matrix2d mtm;
  mtm << sxx, sxz, sxz, szz;
  check_conditioning(mtm, opts.singular_tol, "gmm (E block)");

  // FWL-orthogonalized E regressors: xt = x - (x'z/z'z) z, zt = z - (z'x/x'x) x.
  const Eigen::VectorXd xt = de.x - (sxz / szz) * de.z;
  const Eigen::VectorXd zt = de.z - (sxz / sxx) * de.x;

  MomentSystem m;
  m.n_e = e.n();
  m.n_o = o.n();
  m.gamma_mat(0, 0) = xt.squaredNorm();
  m.gamma_mat(1, 1) = zt.squaredNorm();
  m.m0(0) = xt.dot(de.y);
  m.m0(1) = zt.dot(de.y);
  m.omega(0, 0) = m.gamma_mat(0, 0);
  m.omega(1, 1) = m.gamma_mat(1, 1);

  if (o.n() > 0) {
    const auto dof = demean(o.y, o.x, o.z);
    m.gamma_mat(2, 0) = dof.z.dot(dof.x);
    m.gamma_mat(2, 1) = dof.z.squaredNorm();
    m.m0(2) = dof.z.dot(dof.y);
    m.omega(2, 2) = dof.z.squaredNorm();
  }

  // Pooled residual variance from the E fit identifies sigma2 without
  // endogeneity contamination.
  const Eigen::Vector2d beta_e = mtm.inverse() * Eigen::Vector2d(de.x.dot(de.y), de.z.dot(de.y));
  const double rss =
      std::max(0.0, de.y.squaredNorm() - beta_e.dot(Eigen::Vector2d(de.x.dot(de.y), de.z.dot(de.y))));
  m.sigma2_hat = rss / static_cast<double>(e.n() - 2);
  return m;
}

namespace {

// theta = (G'WG)^-1 G'W m0 on the (possibly O-less) system.
struct GmmSolve {
  Eigen::Vector2d theta;
  Eigen::Matrix2d bread_inv;  // (G'WG)^-1
  Eigen::Matrix2d gwg;
};

GmmSolve solve_gmm(const MomentSystem& m, const Eigen::Matrix3d& w, bool has_o,
                   const EstimatorOptions& opts) {
  const Eigen::Matrix<double, 3, 2>& g = m.gamma_mat;
  Eigen::Matrix2d gwg;
  Eigen::Vector2d gwm;
  if (has_o) {
    gwg = g.transpose() * w * g;
    gwm = g.transpose() * w * m.m0;
  } else {
    const Eigen::Matrix2d g2 = g.topRows<2>();
    const Eigen::Matrix2d w2 = w.topLeftCorner<2, 2>();
    gwg = g2.transpose() * w2 * g2;
    gwm = g2.transpose() * w2 * m.m0.head<2>();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(gwg);
  if (!(es.eigenvalues()(0) > opts.singular_tol * es.eigenvalues()(1)) ||
      !(es.eigenvalues()(1) > 0.0)) {
    throw EstimationError("SingularWeighting", "gmm: G'WG is singular");
  }
  GmmSolve s;
  s.gwg = gwg;
  s.bread_inv = gwg.inverse();
  s.theta = s.bread_inv * gwm;
  return s;
}

Eigen::Matrix3d optimal_weight(const MomentSystem& m, bool has_o) {
  Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
  for (int i = 0; i < (has_o ? 3 : 2); ++i) {
    const double d = m.omega(i, i);
    if (!(d > 0.0)) {
      throw EstimationError("SingularWeighting",
                            "gmm: Omega diagonal entry " + std::to_string(i) + " is not positive");
    }
    w(i, i) = 1.0 / d;
  }
  return w;
}

}  // namespace

EstimateReport gmm_combine(const FusedDataset& ds, const GmmWeighting& weighting,
                           const EstimatorOptions& opts) {
  const MomentSystem m = build_moment_system(ds, opts);
  const bool has_o = m.n_o > 0;

  Eigen::Matrix3d w;
  GmmSolve sol{};
  switch (weighting.kind) {
    case GmmWeighting::Kind::Optimal: {
      w = optimal_weight(m, has_o);
      sol = solve_gmm(m, w, has_o, opts);
      break;
    }
    case GmmWeighting::Kind::TwoStepFeasible: {
      // Identity first step, then heteroscedasticity-robust diagonal blocks
      // from the first-step residuals.
      const GmmSolve first = solve_gmm(m, Eigen::Matrix3d::Identity(), has_o, opts);
      const auto [e, o] = split(ds);
      const auto de = demean(e.y, e.x, e.z);
      const double sxz = de.x.dot(de.z);
      const Eigen::VectorXd xt = de.x - (sxz / de.z.squaredNorm()) * de.z;
      const Eigen::VectorXd zt = de.z - (sxz / de.x.squaredNorm()) * de.x;
      const Eigen::VectorXd ee = de.y - first.theta(0) * de.x - first.theta(1) * de.z;
      w = Eigen::Matrix3d::Zero();
      const double w0 = ee.cwiseProduct(xt).squaredNorm();
      const double w1 = ee.cwiseProduct(zt).squaredNorm();
      if (!(w0 > 0.0) || !(w1 > 0.0)) {
        throw EstimationError("SingularWeighting", "gmm: feasible Omega block is degenerate");
      }
      w(0, 0) = 1.0 / w0;
      w(1, 1) = 1.0 / w1;
      if (has_o) {
        const auto dof = demean(o.y, o.x, o.z);
        const Eigen::VectorXd eo = dof.y - first.theta(0) * dof.x - first.theta(1) * dof.z;
        const double w2 = eo.cwiseProduct(dof.z).squaredNorm();
        if (!(w2 > 0.0)) {
          throw EstimationError("SingularWeighting", "gmm: feasible O block is degenerate");
        }
        w(2, 2) = 1.0 / w2;
      }
      sol = solve_gmm(m, w, has_o, opts);
      break;
    }
    case GmmWeighting::Kind::Custom: {
      w = weighting.w;
      sol = solve_gmm(m, w, has_o, opts);
      break;
    }
  }

  // Variance. Optimal: sigma2 (G'Omega^-1 G)^-1. TwoStepFeasible: (G'What G)^-1
  // with What already in epsilon^2 units. Custom: full sandwich with the
  // homoscedastic Omega.
  Eigen::Matrix2d var;
  switch (weighting.kind) {
    case GmmWeighting::Kind::Optimal:
      var = m.sigma2_hat * sol.bread_inv;
      break;
    case GmmWeighting::Kind::TwoStepFeasible:
      var = sol.bread_inv;
      break;
    case GmmWeighting::Kind::Custom: {
      Eigen::Matrix3d omega_s = m.sigma2_hat * m.omega;
      if (has_o) {
        const Eigen::Matrix2d meat =
            m.gamma_mat.transpose() * w * omega_s * w * m.gamma_mat;
        var = sol.bread_inv * meat * sol.bread_inv;
      } else {
        const Eigen::Matrix2d g2 = m.gamma_mat.topRows<2>();
        const Eigen::Matrix2d w2 = w.topLeftCorner<2, 2>();
        const Eigen::Matrix2d meat = g2.transpose() * w2 * omega_s.topLeftCorner<2, 2>() * w2 * g2;
        var = sol.bread_inv * meat * sol.bread_inv;
      }
      break;
    }
  }

  EstimateReport rep;
  rep.method = Method::CombinedGMM;
  rep.beta1_hat = sol.theta(0);
  rep.b2_hat = sol.theta(1);
  rep.var_beta1 = var(0, 0);
  rep.diagnostics["sigma2_hat"] = m.sigma2_hat;
  rep.diagnostics["n_e"] = static_cast<double>(m.n_e);
  rep.diagnostics["n_o"] = static_cast<double>(m.n_o);
  rep.hyperparameters["weighting"] = static_cast<double>(weighting.kind);
  return rep;
}

EstimateReport estimate_experiment_only(const FusedDataset& ds, const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  (void)o;
  const Ols2Fit fit = ols2(e, opts);
  EstimateReport rep;
  rep.method = Method::ExperimentOnly;
  rep.beta1_hat = fit.beta1;
  rep.b2_hat = fit.b2;
  rep.var_beta1 = fit.var(0, 0);
  rep.diagnostics["sigma2_hat"] = fit.sigma2;
  return rep;
}

EstimateReport estimate_obs_ols(const FusedDataset& ds, const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  (void)e;
  const Ols2Fit fit = ols2(o, opts);
  EstimateReport rep;
  rep.method = Method::ObsOLS;
  rep.beta1_hat = fit.beta1;
  rep.var_beta1 = fit.var(0, 0);
  rep.diagnostics["sigma2_hat"] = fit.sigma2;
  return rep;
}

EstimateReport estimate_obs_iv(const FusedDataset& ds, const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  (void)e;
  const ObsStats s = obs_stats(o, ObsCovMode::InfluenceFunction, 0, 0, opts);
  EstimateReport rep;
  rep.method = Method::ObsIV;
  rep.beta1_hat = s.b_iv;
  rep.var_beta1 = s.cov(0, 0);
  rep.diagnostics["gamma_hat"] = s.gamma;
  return rep;
}

EstimateReport estimate_bias_corrected(const FusedDataset& ds, ObsCovMode mode,
                                       const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  const Ols2Fit efit = ols2(e, opts);
  const ObsStats s = obs_stats(o, mode, 500, 0, opts);
  const BiasCorrectedFit f = bias_corrected_obs(s, efit.b2, efit.var(1, 1), opts);
  EstimateReport rep;
  rep.method = Method::BiasCorrectedObs;
  rep.beta1_hat = f.beta1;
  rep.b2_hat = efit.b2;
  rep.var_beta1 = f.var_beta1;
  rep.diagnostics["b_iv_hat"] = s.b_iv;
  rep.diagnostics["gamma_hat"] = s.gamma;
  return rep;
}

EstimateReport estimate_weighted(const FusedDataset& ds, ObsCovMode mode,
                                 const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  const Ols2Fit efit = ols2(e, opts);
  const ObsStats s = obs_stats(o, mode, 500, 0, opts);
  const BiasCorrectedFit f = bias_corrected_obs(s, efit.b2, efit.var(1, 1), opts);
  const WeightedCombine w = weighted_combine(efit.beta1, efit.var(0, 0), f.beta1, f.var_beta1);
  EstimateReport rep;
  rep.method = Method::Weighted;
  rep.beta1_hat = w.beta1;
  rep.b2_hat = efit.b2;
  rep.var_beta1 = w.var_beta1;
  rep.hyperparameters["w_O"] = w.w_o;
  rep.hyperparameters["w_E"] = w.w_e;
  rep.diagnostics["b_iv_hat"] = s.b_iv;
  rep.diagnostics["gamma_hat"] = s.gamma;
  rep.diagnostics["beta1_obs"] = f.beta1;
  rep.diagnostics["var_beta1_obs"] = f.var_beta1;
  rep.diagnostics["var_beta1_exp"] = efit.var(0, 0);
  return rep;
}

EstimateReport estimate_regularized(const FusedDataset& ds, double lambda,
                                    const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  const ObsStats s = obs_stats(o, ObsCovMode::InfluenceFunction, 0, 0, opts);
  const RegularizedFit f = regularized_regression(e, s.b_iv, s.gamma, lambda, opts);
  EstimateReport rep;
  rep.method = Method::Regularized;
  rep.beta1_hat = f.beta1;
  rep.b2_hat = f.b2;
  // Slope variance from the augmented system, sigma2 from the unpenalized fit.
  const Ols2Fit efit = ols2(e, opts);
  if (std::isinf(lambda)) {
    rep.var_beta1 = efit.var(0, 0);  // conservative; constrained variance is smaller
  } else {
    const auto d_x = e.x.array() - e.x.mean();
    const auto d_z = e.z.array() - e.z.mean();
    Eigen::Matrix2d mtm;
    mtm << d_x.matrix().squaredNorm(), (d_x * d_z).sum(), (d_x * d_z).sum(),
        d_z.matrix().squaredNorm();
    const Eigen::Vector2d dir(1.0, 1.0 / s.gamma);
    mtm += lambda * dir * dir.transpose();
    rep.var_beta1 = efit.sigma2 * mtm.inverse()(0, 0);
  }
  rep.hyperparameters["lambda"] = lambda;
  rep.diagnostics["b_iv_hat"] = s.b_iv;
  rep.diagnostics["gamma_hat"] = s.gamma;
  rep.diagnostics["constraint_residual"] = f.constraint_residual;
  return rep;
}

}  // namespace causalfuse
