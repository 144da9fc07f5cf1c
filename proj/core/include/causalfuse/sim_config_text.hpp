#pragma once

#include <iosfwd>
#include <string>

#include "causalfuse/simulation.hpp"

namespace causalfuse {

// Flat `key = value` text, one per line, '#' comments. Unknown keys are
// rejected. Keys: beta1, beta2, gamma, sigma_v2, var_u, rho_zu_e, rho_zu_o,
// cov_uv, theta, pi_e, n_e, design (random | quantile), q, seed.
SimulationConfig parse_sim_config(std::istream& in, const std::string& origin = "<stream>");
SimulationConfig load_sim_config(const std::string& path);

std::string sim_config_to_text(const SimulationConfig& cfg);

}  // namespace causalfuse
