// causalfuse: batch CLI over the fused-sample estimators, the Monte Carlo
// harness, the design analytics, and the LOOCV tuners.
//
// Exit codes: 0 success, 2 validation error (input data, config, flags),
// 3 estimation error. Reports go to stdout, diagnostics to stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "causalfuse/csv.hpp"
#include "causalfuse/efficiency.hpp"
#include "causalfuse/estimators.hpp"
#include "causalfuse/probit.hpp"
#include "causalfuse/report_json.hpp"
#include "causalfuse/robustness.hpp"
#include "causalfuse/sim_config_text.hpp"
#include "causalfuse/simulation.hpp"
#include "causalfuse/version.hpp"

#include "manifest.hpp"

namespace cf = causalfuse;
using cf::cli::RunManifest;

namespace {

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "inf" || item == "INF") {
      out.push_back(cf::kLambdaInf);
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') {
      throw cf::ValidationError("InvalidFlag", "bad numeric list entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw cf::ValidationError("InvalidFlag", "empty numeric list");
  }
  return out;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

struct EstimateArgs {
  std::string csv_path;
  std::string method = "gmm";
  std::string model = "linear";
  std::string lambda = "";
  std::string penalty = "hard";
  std::string weighting = "optimal";
  std::string obs_cov = "influence";
  double weight = -1.0;  // manual w_O override for --method weighted
};

cf::EstimateReport run_estimate(const EstimateArgs& a, const cf::FusedDataset& ds) {
  if (a.model == "probit") {
    if (a.method == "experiment-only") return cf::probit_experiment_only(ds);
    if (a.method == "combined" || a.method == "gmm") {
      const auto mode =
          a.penalty == "quadratic" ? cf::PenaltyMode::Quadratic : cf::PenaltyMode::Hard;
      return cf::probit_combined(ds, mode);
    }
    throw cf::ValidationError("InvalidFlag",
                              "probit model supports --method experiment-only|combined");
  }
  const auto cov_mode = a.obs_cov == "bootstrap" ? cf::ObsCovMode::Bootstrap
                                                 : cf::ObsCovMode::InfluenceFunction;
  if (a.method == "experiment-only") return cf::estimate_experiment_only(ds);
  if (a.method == "obs-ols") return cf::estimate_obs_ols(ds);
  if (a.method == "obs-iv") return cf::estimate_obs_iv(ds);
  if (a.method == "bias-corrected") return cf::estimate_bias_corrected(ds, cov_mode);
  if (a.method == "weighted") {
    if (a.weight >= 0.0) {
      if (a.weight > 1.0) {
        throw cf::ValidationError("InvalidFlag", "--weight must be in [0,1]");
      }
      const auto [e, o] = cf::split(ds);
      const cf::Ols2Fit efit = cf::ols2(e);
      const cf::ObsStats s = cf::obs_stats(o, cov_mode);
      const cf::BiasCorrectedFit f = cf::bias_corrected_obs(s, efit.b2, efit.var(1, 1));
      cf::EstimateReport rep;
      rep.method = cf::Method::Weighted;
      rep.beta1_hat = a.weight * f.beta1 + (1.0 - a.weight) * efit.beta1;
      rep.b2_hat = efit.b2;
      rep.var_beta1 = a.weight * a.weight * f.var_beta1 +
                      (1.0 - a.weight) * (1.0 - a.weight) * efit.var(0, 0);
      rep.hyperparameters["w_O"] = a.weight;
      rep.hyperparameters["w_E"] = 1.0 - a.weight;
      rep.diagnostics["b_iv_hat"] = s.b_iv;
      rep.diagnostics["gamma_hat"] = s.gamma;
      return rep;
    }
    return cf::estimate_weighted(ds, cov_mode);
  }
  if (a.method == "regularized") {
    if (a.lambda.empty()) {
      throw cf::ValidationError("InvalidFlag", "--method regularized needs --lambda (or 'inf')");
    }
    const double lambda = parse_double_list(a.lambda).at(0);
    return cf::estimate_regularized(ds, lambda);
  }
  if (a.method == "gmm") {
    const auto w = a.weighting == "feasible" ? cf::GmmWeighting::two_step_feasible()
                                             : cf::GmmWeighting::optimal();
    return cf::gmm_combine(ds, w);
  }
  throw cf::ValidationError("InvalidFlag", "unknown --method '" + a.method + "'");
}

int cmd_estimate(const EstimateArgs& a) {
  const cf::FusedDataset ds = cf::load_csv(a.csv_path);
  const cf::EstimateReport rep = run_estimate(a, ds);

  RunManifest man;
  man.subcommand = "estimate";
  man.input_digest = cf::cli::file_digest(a.csv_path);
  man.config["method"] = a.method;
  man.config["model"] = a.model;
  if (!a.lambda.empty()) man.config["lambda"] = a.lambda;

  nlohmann::json j = rep;
  j["manifest"] = man.to_json();
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SimulateArgs {
  std::string config_path;
  long reps = 1000;
  bool reps_set = false;
  std::optional<std::uint64_t> seed;
  std::string sweep;
  std::string emit_samples;
  std::string estimators = "experiment-only,gmm,obs-ols,obs-iv";
  int threads = 1;
};

void write_summary_rows(std::ostream& out, const cf::MonteCarloSummary& s,
                        const std::string& prefix) {
  for (std::size_t i = 0; i < s.estimators.size(); ++i) {
    const auto& st = s.stats[i];
    out << prefix << cf::estimator_kind_name(s.estimators[i]) << "," << fmt(st.bias) << ","
        << fmt(st.bias2) << "," << fmt(st.variance) << "," << fmt(st.mse) << ","
        << fmt(st.relative_mse) << "," << fmt(st.efficiency_gain) << "," << st.failures << "\n";
  }
}

int cmd_simulate(const SimulateArgs& a) {
  cf::SimulationConfig cfg = cf::load_sim_config(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  cfg = cfg.resolved();

  std::vector<cf::EstimatorKind> kinds;
  {
    std::stringstream ss(a.estimators);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto k = cf::estimator_kind_from_name(item);
      if (!k) {
        throw cf::ValidationError("InvalidFlag", "unknown estimator '" + item + "'");
      }
      kinds.push_back(*k);
    }
  }

  RunManifest man;
  man.subcommand = "simulate";
  man.seed = cfg.seed;
  man.input_digest = cf::cli::file_digest(a.config_path);
  man.config["reps"] = std::to_string(a.reps);
  man.config["estimators"] = a.estimators;
  man.config["n_e"] = std::to_string(cfg.n_e);
  man.config["pi_e"] = fmt(cfg.pi_e);
  man.config["gamma"] = fmt(cfg.gamma);
  man.config["theta"] = fmt(cfg.theta);

  if (!a.emit_samples.empty()) {
    const cf::FusedDataset ds = cf::draw_sample(cfg, 0);
    cf::write_csv(ds, a.emit_samples);
    man.write_sibling(a.emit_samples);
    std::cerr << "wrote sample dataset to " << a.emit_samples << "\n";
  }

  if (!a.sweep.empty()) {
    const auto eq = a.sweep.find('=');
    if (eq == std::string::npos) {
      throw cf::ValidationError("InvalidFlag", "--sweep expects name=v1,v2,...");
    }
    std::string name = a.sweep.substr(0, eq);
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const std::vector<double> values = parse_double_list(a.sweep.substr(eq + 1));
    man.config["sweep"] = a.sweep;
    const cf::SweepResult sw =
        cf::misspecification_sweep(cfg, name, values, kinds, a.reps, a.threads);
    man.write_comment_block(std::cout);
    std::cout << "sweep_param,sweep_value,estimator,bias,bias2,variance,mse,relative_mse,"
                 "efficiency_gain,failures\n";
    for (std::size_t i = 0; i < sw.values.size(); ++i) {
      write_summary_rows(std::cout, sw.summaries[i], name + "," + fmt(sw.values[i]) + ",");
    }
    return 0;
  }

  const cf::MonteCarloSummary s = cf::run_monte_carlo(cfg, kinds, a.reps, a.threads);
  man.config["replications"] = std::to_string(s.replications);
  man.write_comment_block(std::cout);
  std::cout << "estimator,bias,bias2,variance,mse,relative_mse,efficiency_gain,failures\n";
  write_summary_rows(std::cout, s, "");
  return 0;
}

struct DesignArgs {
  double pi_o = 0.95;
  double pi_e = -1.0;
  double gamma = 0.95;
  double sigma2 = 1.0;
  double sigma_v2 = -1.0;
  double var_x_e = 1.0, var_x_o = -1.0, var_z_e = 1.0, var_z_o = 1.0;
  long n_e = 100;
  std::string q_grid;
};

int cmd_design(const DesignArgs& a) {
  RunManifest man;
  man.subcommand = "design";
  man.config["gamma"] = fmt(a.gamma);
  man.write_comment_block(std::cout);
  std::cout << "design,predicted_ratio,predicted_relative_mse\n";

  if (!a.q_grid.empty()) {
    const double pi_e = a.pi_e > 0.0 ? a.pi_e : 1.0 - a.pi_o;
    const double sv2 = a.sigma_v2 >= 0.0 ? a.sigma_v2 : 1.0 - a.gamma * a.gamma;
    for (double q : parse_double_list(a.q_grid)) {
      const cf::MomentProfile p =
          cf::quantile_design_profile(q, pi_e, a.gamma, sv2, a.sigma2, a.n_e);
      const double ratio = cf::efficiency_ratio(p);
      std::cout << "quantile_tails(q=" << fmt(q) << ")," << fmt(ratio) << ","
                << fmt(1.0 / ratio) << "\n";
    }
    return 0;
  }

  cf::MomentProfile p;
  p.pi_o = a.pi_o;
  p.gamma = a.gamma;
  p.sigma2 = a.sigma2;
  p.n_e = a.n_e;
  p.var_x_e = a.var_x_e;
  p.var_x_o = a.var_x_o > 0.0 ? a.var_x_o : a.var_x_e;
  p.var_z_e = a.var_z_e;
  p.var_z_o = a.var_z_o;
  const double ratio = cf::efficiency_ratio(p);
  std::cout << "random," << fmt(ratio) << "," << fmt(1.0 / ratio) << "\n";
  return 0;
}

struct TuneArgs {
  std::string csv_path;
  std::string target = "weight";
  std::string grid;
};

int cmd_tune(const TuneArgs& a) {
  const cf::FusedDataset ds = cf::load_csv(a.csv_path);
  cf::CVResult res;
  if (a.target == "weight") {
    const auto grid = a.grid.empty() ? cf::default_weight_grid() : parse_double_list(a.grid);
    res = cf::tune_weight(ds, grid);
  } else if (a.target == "lambda") {
    const auto grid = a.grid.empty() ? cf::default_lambda_grid() : parse_double_list(a.grid);
    res = cf::tune_lambda(ds, grid);
  } else {
    throw cf::ValidationError("InvalidFlag", "--target must be weight or lambda");
  }

  RunManifest man;
  man.subcommand = "tune";
  man.input_digest = cf::cli::file_digest(a.csv_path);
  man.config["target"] = a.target;
  man.write_comment_block(std::cout);
  std::cout << "hyperparameter,cv_error,selected\n";
  for (std::size_t i = 0; i < res.grid.size(); ++i) {
    std::cout << fmt(res.grid[i]) << "," << fmt(res.cv_error[i]) << ","
              << (i == res.selected ? 1 : 0) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fused experimental/observational causal effect estimation"};
  app.set_version_flag("--version", cf::kVersion);
  app.require_subcommand(1);

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "estimate beta1 from a y,x,z,g CSV");
  est->add_option("csv", ea.csv_path, "input CSV path")->required();
  est->add_option("--method", ea.method,
                  "experiment-only|obs-ols|obs-iv|bias-corrected|weighted|regularized|gmm "
                  "(probit: experiment-only|combined)");
  est->add_option("--model", ea.model, "linear|probit")
      ->check(CLI::IsMember({"linear", "probit"}));
  est->add_option("--lambda", ea.lambda, "regularization weight, number or 'inf'");
  est->add_option("--weight", ea.weight, "manual w_O for --method weighted");
  est->add_option("--penalty", ea.penalty, "probit combined: hard|quadratic")
      ->check(CLI::IsMember({"hard", "quadratic"}));
  est->add_option("--weighting", ea.weighting, "gmm: optimal|feasible")
      ->check(CLI::IsMember({"optimal", "feasible"}));
  est->add_option("--obs-cov", ea.obs_cov, "influence|bootstrap")
      ->check(CLI::IsMember({"influence", "bootstrap"}));

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study from a key=value config");
  sim->add_option("config", sa.config_path, "config file path")->required();
  sim->add_option("--reps", sa.reps, "replications");
  sim->add_option("--seed", sa.seed, "seed override");
  sim->add_option("--sweep", sa.sweep, "parameter sweep, e.g. q=0.025,0.05,0.1");
  sim->add_option("--emit-samples", sa.emit_samples, "dump replication 0 as CSV to this path");
  sim->add_option("--estimators", sa.estimators, "comma list of estimator names");
  sim->add_option("--threads", sa.threads, "worker threads (results are thread-count invariant)");

  DesignArgs da;
  auto* des = app.add_subcommand("design", "predicted efficiency ratios for designs");
  des->add_option("--pi-o", da.pi_o, "observational share");
  des->add_option("--pi-e", da.pi_e, "experimental share (for --q-grid)");
  des->add_option("--gamma", da.gamma, "first-stage slope");
  des->add_option("--sigma2", da.sigma2, "residual variance");
  des->add_option("--sigma-v2", da.sigma_v2, "first-stage residual variance");
  des->add_option("--var-x-e", da.var_x_e, "Var(X|E)");
  des->add_option("--var-x-o", da.var_x_o, "Var(X|O)");
  des->add_option("--var-z-e", da.var_z_e, "Var(Z|E)");
  des->add_option("--var-z-o", da.var_z_o, "Var(Z|O)");
  des->add_option("--n-e", da.n_e, "experimental sample size");
  des->add_option("--q-grid", da.q_grid, "tails design masses, e.g. 0.025,0.05,0.1");

  TuneArgs ta;
  auto* tune = app.add_subcommand("tune", "LOOCV hyperparameter tuning");
  tune->add_option("csv", ta.csv_path, "input CSV path")->required();
  tune->add_option("--target", ta.target, "weight|lambda");
  tune->add_option("--grid", ta.grid, "comma list overriding the default grid");

  try {
    app.parse(argc, argv);
    if (est->parsed()) return cmd_estimate(ea);
    if (sim->parsed()) return cmd_simulate(sa);
    if (des->parsed()) return cmd_design(da);
    if (tune->parsed()) return cmd_tune(ta);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help / --version
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cf::ValidationError& e) {
    std::cerr << "error [" << e.name() << "]: " << e.what() << "\n";
    return 2;
  } catch (const cf::EstimationError& e) {
    std::cerr << "error [" << e.name() << "]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
