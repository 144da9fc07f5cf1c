#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace causalfuse {

enum class Group : std::uint8_t { E, O };

// Validation errors map to CLI exit code 2, estimation errors to 3.
// name() carries the error case (e.g. "UnknownGroupTag", "SingularDesign").
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

struct UnitRecord {
  double y = 0.0;  // outcome
  double x = 0.0;  // treatment
  double z = 0.0;  // first-stage covariate
  Group g = Group::E;
};

// Immutable after construction; safe to share read-only across threads.
class FusedDataset {
 public:
  FusedDataset() = default;

  // Validates finiteness of every field and populates the group counts.
  static FusedDataset from_records(std::vector<UnitRecord> records);

  const std::vector<UnitRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t n_e() const noexcept { return n_e_; }
  std::size_t n_o() const noexcept { return n_o_; }
  double pi_o() const noexcept {
    return records_.empty() ? 0.0 : static_cast<double>(n_o_) / static_cast<double>(size());
  }

 private:
  std::vector<UnitRecord> records_;
  std::size_t n_e_ = 0;
  std::size_t n_o_ = 0;
};

// Column view of one group, rows in record order.
struct DataBlock {
  Eigen::VectorXd y;
  Eigen::VectorXd x;
  Eigen::VectorXd z;

  Eigen::Index n() const noexcept { return y.size(); }
};

// Partition into (experimental, observational) column blocks.
std::pair<DataBlock, DataBlock> split(const FusedDataset& ds);

enum class Method {
  ExperimentOnly,
  ObsOLS,
  ObsIV,
  BiasCorrectedObs,
  Weighted,
  Regularized,
  CombinedGMM,
  ProbitExperimentOnly,
  ProbitCombined,
};

std::string_view method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

struct EstimateReport {
  Method method = Method::ExperimentOnly;
  double beta1_hat = 0.0;
  std::optional<double> b2_hat;  // absent for ObsOLS / ObsIV
  double var_beta1 = 0.0;
  std::map<std::string, double> hyperparameters;
  std::map<std::string, double> diagnostics;
};

}  // namespace causalfuse
