#pragma once

#include <nlohmann/json.hpp>

#include "causalfuse/types.hpp"

namespace causalfuse {

// Flat object: method, beta1_hat, b2_hat (omitted when absent), var_beta1,
// hyperparameters, diagnostics.
void to_json(nlohmann::json& j, const EstimateReport& report);
void from_json(const nlohmann::json& j, EstimateReport& report);

std::string report_to_json_string(const EstimateReport& report, int indent = 2);

}  // namespace causalfuse
