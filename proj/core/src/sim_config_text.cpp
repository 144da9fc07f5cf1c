#include "causalfuse/sim_config_text.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace causalfuse {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, const std::string& key, const std::string& origin) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ValidationError("InvalidConfig", origin + ": bad numeric value for " + key);
  }
  return x;
}

}  // namespace

SimulationConfig parse_sim_config(std::istream& in, const std::string& origin) {
  SimulationConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("InvalidConfig", origin + ": line " + std::to_string(line_no) +
                                                 ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "beta1") {
      cfg.beta1 = to_double(val, key, origin);
    } else if (key == "beta2") {
      cfg.beta2 = to_double(val, key, origin);
    } else if (key == "gamma") {
      cfg.gamma = to_double(val, key, origin);
    } else if (key == "sigma_v2") {
      cfg.sigma_v2 = to_double(val, key, origin);
    } else if (key == "var_u") {
      cfg.var_u = to_double(val, key, origin);
    } else if (key == "rho_zu_e") {
      cfg.rho_zu_e = to_double(val, key, origin);
    } else if (key == "rho_zu_o") {
      cfg.rho_zu_o = to_double(val, key, origin);
    } else if (key == "cov_uv") {
      cfg.cov_uv = to_double(val, key, origin);
    } else if (key == "theta") {
      cfg.theta = to_double(val, key, origin);
    } else if (key == "pi_e") {
      cfg.pi_e = to_double(val, key, origin);
    } else if (key == "n_e") {
      cfg.n_e = static_cast<std::int64_t>(to_double(val, key, origin));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(std::strtoull(val.c_str(), nullptr, 10));
    } else if (key == "design") {
      if (val == "random") {
        cfg.assignment.kind = DesignRule::Kind::RandomSplit;
      } else if (val == "quantile") {
        cfg.assignment.kind = DesignRule::Kind::QuantileTails;
      } else {
        throw ValidationError("InvalidConfig",
                              origin + ": design must be 'random' or 'quantile', got '" + val + "'");
      }
    } else if (key == "q") {
      cfg.assignment.q = to_double(val, key, origin);
    } else {
      throw ValidationError("InvalidConfig",
                            origin + ": unknown key '" + key + "' on line " +
                                std::to_string(line_no));
    }
  }
  return cfg;
}

SimulationConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("MissingFile", path + ": cannot open config file");
  }
  return parse_sim_config(in, path);
}

std::string sim_config_to_text(const SimulationConfig& cfg) {
  char buf[256];
  std::ostringstream out;
  auto emit = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    out << buf;
  };
  emit("beta1", cfg.beta1);
  emit("beta2", cfg.beta2);
  emit("gamma", cfg.gamma);
  emit("sigma_v2", cfg.sigma_v2);
  emit("var_u", cfg.var_u);
  emit("rho_zu_e", cfg.rho_zu_e);
  emit("rho_zu_o", cfg.rho_zu_o);
  emit("cov_uv", cfg.cov_uv);
  emit("theta", cfg.theta);
  emit("pi_e", cfg.pi_e);
  out << "n_e = " << cfg.n_e << "\n";
  out << "design = "
      << (cfg.assignment.kind == DesignRule::Kind::RandomSplit ? "random" : "quantile") << "\n";
  emit("q", cfg.assignment.q);
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

}  // namespace causalfuse
