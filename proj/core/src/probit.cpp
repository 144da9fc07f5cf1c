#include "causalfuse/probit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "causalfuse/estimators.hpp"
#include "causalfuse/normal.hpp"

namespace causalfuse {

namespace {

void require_binary(const DataBlock& b, const char* where) {
  for (Eigen::Index i = 0; i < b.n(); ++i) {
    if (b.y[i] != 0.0 && b.y[i] != 1.0) {
      throw ValidationError("NonBinaryOutcome", std::string(where) + ": y[" + std::to_string(i) +
                                                    "] = " + std::to_string(b.y[i]));
    }
  }
}

double loglik_2(const DataBlock& b, double b1, double b2) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < b.n(); ++i) {
    const double s = b.y[i] > 0.5 ? 1.0 : -1.0;
    acc += log_norm_cdf(s * (b1 * b.x[i] + b2 * b.z[i]));
  }
  return acc;
}

}  // namespace

double probit_loglik_e(double beta1, double b2, const DataBlock& exp) {
  require_binary(exp, "probit_loglik_e");
  return loglik_2(exp, beta1, b2);
}

Eigen::Vector2d probit_score_e(double beta1, double b2, const DataBlock& exp) {
  require_binary(exp, "probit_score_e");
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < exp.n(); ++i) {
    const double s = exp.y[i] > 0.5 ? 1.0 : -1.0;
    const double eta = beta1 * exp.x[i] + b2 * exp.z[i];
    const double lam = s * inverse_mills(s * eta);
    g[0] += lam * exp.x[i];
    g[1] += lam * exp.z[i];
  }
  return g;
}

ProbitFit probit_mle(const DataBlock& block, const EstimatorOptions& opts) {
  require_binary(block, "probit_mle");
  const Eigen::Index n = block.n();
  if (n < 3) {
    throw EstimationError("SingularDesign", "probit_mle: needs at least 3 rows");
  }
  {
    Eigen::Matrix2d mtm;
    mtm << block.x.squaredNorm(), block.x.dot(block.z), block.x.dot(block.z),
        block.z.squaredNorm();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(mtm);
    if (!(es.eigenvalues()(0) > opts.singular_tol * es.eigenvalues()(1))) {
      throw EstimationError("SingularDesign", "probit_mle: collinear regressors");
    }
  }

  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  ProbitFit fit;
  double ll = loglik_2(block, beta[0], beta[1]);
  fit.objective_trace.push_back(ll);
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();

  constexpr int kMaxIter = 200;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    hess.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = block.y[i] > 0.5 ? 1.0 : -1.0;
      const double eta = beta[0] * block.x[i] + beta[1] * block.z[i];
      const double lam = s * inverse_mills(s * eta);
      const double w = lam * (lam + eta);  // negative second derivative in eta
      grad[0] += lam * block.x[i];
      grad[1] += lam * block.z[i];
      hess(0, 0) += w * block.x[i] * block.x[i];
      hess(0, 1) += w * block.x[i] * block.z[i];
      hess(1, 1) += w * block.z[i] * block.z[i];
    }
    hess(1, 0) = hess(0, 1);
    if (grad.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + std::abs(ll))) break;
    Eigen::Vector2d step = hess.ldlt().solve(grad);
    if (!step.allFinite()) {
      throw EstimationError("NonConvergence", "probit_mle: Newton step is not finite");
    }
    // step halving keeps the objective non-decreasing
    double scale = 1.0;
    double ll_new = loglik_2(block, beta[0] + step[0], beta[1] + step[1]);
    int halvings = 0;
    while (ll_new < ll && halvings < 40) {
      scale *= 0.5;
      ++halvings;
      ll_new = loglik_2(block, beta[0] + scale * step[0], beta[1] + scale * step[1]);
    }
    if (ll_new < ll) break;  // no ascent direction left
    beta += scale * step;
    ll = ll_new;
    fit.objective_trace.push_back(ll);
  }

  fit.beta1 = beta[0];
  fit.b2 = beta[1];
  fit.loglik = ll;
  fit.var = hess.inverse();
  return fit;
}

ObsConstraints obs_constraints(const DataBlock& obs, const EstimatorOptions& opts) {
  require_binary(obs, "obs_constraints");
  const Eigen::Index n = obs.n();
  if (n < 3) {
    throw EstimationError("DegenerateZ", "obs_constraints: needs at least 3 rows");
  }
  const double szz = obs.z.squaredNorm();
  if (!(szz > 0.0)) {
    throw EstimationError("DegenerateZ", "obs_constraints: Z'Z = 0");
  }

  ObsConstraints c;
  // First-stage Gaussian MLE through the origin: X = gamma Z + V.
  c.gamma = obs.x.dot(obs.z) / szz;
  const Eigen::VectorXd vres = obs.x - c.gamma * obs.z;
  const double sv2 = vres.squaredNorm() / static_cast<double>(n);
  if (!(sv2 > 0.0)) {
    throw EstimationError("DegenerateZ", "obs_constraints: first stage is exact");
  }
  c.sigma_v = std::sqrt(sv2);

  const ProbitFit rf = probit_mle(obs, opts);
  c.c1 = rf.beta1;
  c.c2 = rf.b2;

  // Joint covariance by stacked influence functions:
  //   probit: H^-1 score_i ; gamma: z_i v_i / Z'Z ; sigma_v: (v_i^2 - sv2)/(2 sv n)
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = obs.y[i] > 0.5 ? 1.0 : -1.0;
    const double eta = c.c1 * obs.x[i] + c.c2 * obs.z[i];
    const double lam = s * inverse_mills(s * eta);
    const double w = lam * (lam + eta);
    hess(0, 0) += w * obs.x[i] * obs.x[i];
    hess(0, 1) += w * obs.x[i] * obs.z[i];
    hess(1, 1) += w * obs.z[i] * obs.z[i];
  }
  hess(1, 0) = hess(0, 1);
  const Eigen::Matrix2d hinv = hess.inverse();

  Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = obs.y[i] > 0.5 ? 1.0 : -1.0;
    const double eta = c.c1 * obs.x[i] + c.c2 * obs.z[i];
    const double lam = s * inverse_mills(s * eta);
    const Eigen::Vector2d score(lam * obs.x[i], lam * obs.z[i]);
    const Eigen::Vector2d pif = hinv * score;
    Eigen::Vector4d psi;
    psi << pif[0], pif[1], obs.z[i] * vres[i] / szz,
        (vres[i] * vres[i] - sv2) / (2.0 * c.sigma_v * static_cast<double>(n));
    acc += psi * psi.transpose();
  }
  c.cov = acc;
  return c;
}

namespace {

struct HardProfile {
  const ObsConstraints& c;

  std::array<double, 2> params(double rho) const {
    const double sq = std::sqrt(1.0 - rho * rho);
    return {c.c1 * sq - rho / c.sigma_v, c.c2 * sq + rho * c.gamma / c.sigma_v};
  }
};

// Golden-section maximization on [lo, hi], then a parabolic refinement.
template <typename F>
double golden_max(const F& f, double lo, double hi, int iters) {
  const double gr = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    }
  }
  double xm = 0.5 * (a + b);
  // one parabolic step through (a, xm, b)
  const double fa = f(a), fm = f(xm), fb = f(b);
  const double denom = (a - xm) * (fm - fb) - (xm - b) * (fa - fm);
  if (std::abs(denom) > 0.0) {
    const double num = (a - xm) * (a + xm) * (fm - fb) - (xm - b) * (xm + b) * (fa - fm);
    const double cand = 0.5 * num / denom;
    if (cand > a && cand < b && f(cand) >= fm) return cand;
  }
  return xm;
}

struct NelderMeadResult {
  Eigen::Vector3d x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> best_trace;
};

template <typename F>
NelderMeadResult nelder_mead_max(const F& f, const Eigen::Vector3d& start, double scale,
                                 int max_iter, double tol) {
  // maximize by minimizing -f
  auto neg = [&f](const Eigen::Vector3d& v) { return -f(v); };
  std::array<Eigen::Vector3d, 4> xs;
  std::array<double, 4> fs;
  xs[0] = start;
  for (int i = 1; i < 4; ++i) {
    xs[i] = start;
    xs[i][i - 1] += scale;
  }
  for (int i = 0; i < 4; ++i) fs[i] = neg(xs[i]);

  NelderMeadResult res;
  auto order = [&] {
    std::array<int, 4> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&fs](int a, int b) { return fs[a] < fs[b]; });
    std::array<Eigen::Vector3d, 4> xs2;
    std::array<double, 4> fs2;
    for (int i = 0; i < 4; ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs = xs2;
    fs = fs2;
  };
  order();
  res.best_trace.push_back(-fs[0]);

  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    if (std::abs(fs[3] - fs[0]) < tol * (1.0 + std::abs(fs[0]))) {
      res.converged = true;
      break;
    }
    const Eigen::Vector3d centroid = (xs[0] + xs[1] + xs[2]) / 3.0;
    const Eigen::Vector3d refl = centroid + (centroid - xs[3]);
    const double fr = neg(refl);
    if (fr < fs[0]) {
      const Eigen::Vector3d expd = centroid + 2.0 * (centroid - xs[3]);
      const double fe = neg(expd);
      if (fe < fr) {
        xs[3] = expd;
        fs[3] = fe;
      } else {
        xs[3] = refl;
        fs[3] = fr;
      }
    } else if (fr < fs[2]) {
      xs[3] = refl;
      fs[3] = fr;
    } else {
      const Eigen::Vector3d contr = centroid + 0.5 * (xs[3] - centroid);
      const double fc = neg(contr);
      if (fc < fs[3]) {
        xs[3] = contr;
        fs[3] = fc;
      } else {
        for (int i = 1; i < 4; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = neg(xs[i]);
        }
      }
    }
    order();
    res.best_trace.push_back(-fs[0]);
  }
  res.x = xs[0];
  res.value = -fs[0];
  return res;
}

}  // namespace

EstimateReport probit_experiment_only(const FusedDataset& ds, const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);
  (void)o;
  const ProbitFit fit = probit_mle(e, opts);
  EstimateReport rep;
  rep.method = Method::ProbitExperimentOnly;
  rep.beta1_hat = fit.beta1;
  rep.b2_hat = fit.b2;
  rep.var_beta1 = fit.var(0, 0);
  rep.diagnostics["loglik"] = fit.loglik;
  return rep;
}

EstimateReport probit_combined(const FusedDataset& ds, PenaltyMode mode,
                               const EstimatorOptions& opts) {
  const auto [e, o] = split(ds);

  if (o.n() == 0) {
    if (mode == PenaltyMode::Hard) {
      throw EstimationError("DegenerateZ", "probit_combined: hard mode needs an O block");
    }
    // no constraint information: experiment-only MLE
    EstimateReport rep = probit_experiment_only(ds, opts);
    rep.method = Method::ProbitCombined;
    rep.hyperparameters["penalty"] = 1.0;
    rep.diagnostics["rho_uv_hat"] = 0.0;
    return rep;
  }

  const ObsConstraints c = obs_constraints(o, opts);
  require_binary(e, "probit_combined");

  EstimateReport rep;
  rep.method = Method::ProbitCombined;
  rep.diagnostics["c1_hat"] = c.c1;
  rep.diagnostics["c2_hat"] = c.c2;
  rep.diagnostics["gamma_hat"] = c.gamma;
  rep.diagnostics["sigma_v_hat"] = c.sigma_v;

  if (mode == PenaltyMode::Hard) {
    const HardProfile prof{c};
    auto objective = [&](double rho) {
      const auto p = prof.params(rho);
      return loglik_2(e, p[0], p[1]);
    };
    constexpr double kRhoEdge = 0.999;
    const double rho_hat = golden_max(objective, -kRhoEdge, kRhoEdge, 90);
    const auto p = prof.params(rho_hat);

    // Profiled curvature for Var(rho), then the delta method through
    // beta1(rho, c1, sigma_v); rho is E-side, the constraints are O-side.
    const double h = 1e-4;
    const double f0 = objective(rho_hat);
    const double fp = objective(std::min(kRhoEdge, rho_hat + h));
    const double fm = objective(std::max(-kRhoEdge, rho_hat - h));
    const double curv = -(fp - 2.0 * f0 + fm) / (h * h);
    const double var_rho = curv > 0.0 ? 1.0 / curv : 0.0;

    const double sq = std::sqrt(1.0 - rho_hat * rho_hat);
    const double db_drho = -c.c1 * rho_hat / sq - 1.0 / c.sigma_v;
    const double db_dc1 = sq;
    const double db_dsv = rho_hat / (c.sigma_v * c.sigma_v);
    double var = db_drho * db_drho * var_rho + db_dc1 * db_dc1 * c.cov(0, 0) +
                 db_dsv * db_dsv * c.cov(3, 3) + 2.0 * db_dc1 * db_dsv * c.cov(0, 3);
    rep.beta1_hat = p[0];
    rep.b2_hat = p[1];
    rep.var_beta1 = std::max(var, 0.0);
    rep.hyperparameters["penalty"] = 0.0;
    rep.diagnostics["rho_uv_hat"] = rho_hat;
    rep.diagnostics["loglik"] = f0;
    return rep;
  }

  // Quadratic penalty: weight the constraint residuals by the inverse of the
  // (c1, c2) sampling covariance.
  const Eigen::Matrix2d wc = c.cov.topLeftCorner<2, 2>().inverse();
  auto objective = [&](const Eigen::Vector3d& t) {
    const double b1 = t[0], b2 = t[1];
    const double rho = std::clamp(t[2], -0.999, 0.999);
    const double sq = std::sqrt(1.0 - rho * rho);
    const Eigen::Vector2d r(c.c1 - (b1 + rho / c.sigma_v) / sq,
                            c.c2 - (b2 - rho * c.gamma / c.sigma_v) / sq);
    return loglik_2(e, b1, b2) - 0.5 * r.dot(wc * r);
  };

  const ProbitFit estart = probit_mle(e, opts);
  const Eigen::Vector3d start(estart.beta1, estart.b2, 0.0);
  const NelderMeadResult nm = nelder_mead_max(objective, start, 0.25, 4000, 1e-12);
  if (!nm.converged) {
    throw EstimationError("NonConvergence",
                          "probit_combined: simplex hit the iteration cap; best iterate beta1=" +
                              std::to_string(nm.x[0]) + " b2=" + std::to_string(nm.x[1]) +
                              " rho=" + std::to_string(nm.x[2]) +
                              " objective=" + std::to_string(nm.value));
  }
  const double rho_hat = std::clamp(nm.x[2], -0.999, 0.999);

  // Curvature of the penalized objective in beta1 (others profiled out is
  // approximated by the full second difference).
  const double h = 1e-4;
  auto at = [&](double d0, double d1, double d2) {
    return objective(nm.x + Eigen::Vector3d(d0, d1, d2));
  };
  const double curv = -(at(h, 0, 0) - 2.0 * nm.value + at(-h, 0, 0)) / (h * h);

  rep.beta1_hat = nm.x[0];
  rep.b2_hat = nm.x[1];
  rep.var_beta1 = curv > 0.0 ? 1.0 / curv : 0.0;
  rep.hyperparameters["penalty"] = 1.0;
  rep.diagnostics["rho_uv_hat"] = rho_hat;
  rep.diagnostics["loglik"] = nm.value;
  rep.diagnostics["iterations"] = static_cast<double>(nm.iterations);
  return rep;
}

}  // namespace causalfuse
