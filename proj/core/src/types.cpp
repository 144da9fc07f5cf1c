#include "causalfuse/types.hpp"

#include <cmath>

namespace causalfuse {

FusedDataset FusedDataset::from_records(std::vector<UnitRecord> records) {
  FusedDataset ds;
  std::size_t idx = 0;
  for (const auto& r : records) {
    ++idx;
    if (!std::isfinite(r.y) || !std::isfinite(r.x) || !std::isfinite(r.z)) {
      throw ValidationError("NonNumericCell",
                            "record " + std::to_string(idx) + ": non-finite value");
    }
    if (r.g == Group::E) {
      ++ds.n_e_;
    } else {
      ++ds.n_o_;
    }
  }
  ds.records_ = std::move(records);
  return ds;
}

std::pair<DataBlock, DataBlock> split(const FusedDataset& ds) {
  DataBlock e, o;
  e.y.resize(static_cast<Eigen::Index>(ds.n_e()));
  e.x.resize(static_cast<Eigen::Index>(ds.n_e()));
  e.z.resize(static_cast<Eigen::Index>(ds.n_e()));
  o.y.resize(static_cast<Eigen::Index>(ds.n_o()));
  o.x.resize(static_cast<Eigen::Index>(ds.n_o()));
  o.z.resize(static_cast<Eigen::Index>(ds.n_o()));
  Eigen::Index ie = 0, io = 0;
  for (const auto& r : ds.records()) {
    if (r.g == Group::E) {
      e.y[ie] = r.y;
      e.x[ie] = r.x;
      e.z[ie] = r.z;
      ++ie;
    } else {
      o.y[io] = r.y;
      o.x[io] = r.x;
      o.z[io] = r.z;
      ++io;
    }
  }
  return {std::move(e), std::move(o)};
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ExperimentOnly: return "ExperimentOnly";
    case Method::ObsOLS: return "ObsOLS";
    case Method::ObsIV: return "ObsIV";
    case Method::BiasCorrectedObs: return "BiasCorrectedObs";
    case Method::Weighted: return "Weighted";
    case Method::Regularized: return "Regularized";
    case Method::CombinedGMM: return "CombinedGMM";
    case Method::ProbitExperimentOnly: return "ProbitExperimentOnly";
    case Method::ProbitCombined: return "ProbitCombined";
  }
  return "Unknown";
}

std::optional<Method> method_from_name(std::string_view name) {
  for (Method m : {Method::ExperimentOnly, Method::ObsOLS, Method::ObsIV,
                   Method::BiasCorrectedObs, Method::Weighted, Method::Regularized,
                   Method::CombinedGMM, Method::ProbitExperimentOnly, Method::ProbitCombined}) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

}  // namespace causalfuse
