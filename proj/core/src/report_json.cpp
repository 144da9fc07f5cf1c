#include "causalfuse/report_json.hpp"

namespace causalfuse {

void to_json(nlohmann::json& j, const EstimateReport& report) {
  j = nlohmann::json{{"method", std::string(method_name(report.method))},
                     {"beta1_hat", report.beta1_hat},
                     {"var_beta1", report.var_beta1},
                     {"hyperparameters", report.hyperparameters},
                     {"diagnostics", report.diagnostics}};
  if (report.b2_hat) {
    j["b2_hat"] = *report.b2_hat;
  }
}

void from_json(const nlohmann::json& j, EstimateReport& report) {
  const auto m = method_from_name(j.at("method").get<std::string>());
  if (!m) {
    throw ValidationError("InvalidReport", "unknown method '" +
                                               j.at("method").get<std::string>() + "'");
  }
  report.method = *m;
  report.beta1_hat = j.at("beta1_hat").get<double>();
  report.var_beta1 = j.at("var_beta1").get<double>();
  report.b2_hat.reset();
  if (j.contains("b2_hat")) {
    report.b2_hat = j.at("b2_hat").get<double>();
  }
  report.hyperparameters = j.value("hyperparameters", std::map<std::string, double>{});
  report.diagnostics = j.value("diagnostics", std::map<std::string, double>{});
}

std::string report_to_json_string(const EstimateReport& report, int indent) {
  nlohmann::json j = report;
  return j.dump(indent);
}

}  // namespace causalfuse
