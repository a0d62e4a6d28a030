#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dgpsi/gp.hpp"
#include "dgpsi/table.hpp"

namespace dgpsi {

enum class Method { Locf, Mice, Gp, Lgp, Dgp };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

/// Output of any imputation method. `filled` keeps the input's observed mask;
/// only values change, and only at cells that were missing.
struct ImputationMethodResult {
  ObservationTable filled;
  /// Predictive variance per cell: 0 at observed cells, NaN where the method
  /// left the column untouched. Absent for LOCF.
  std::optional<Eigen::MatrixXd> variance;
  Method method = Method::Locf;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Carry the last observed value forward; a leading gap takes the first
/// observed value.
ImputationMethodResult locf_impute(const ObservationTable& table, const std::string& variable);
ImputationMethodResult locf_impute(const ObservationTable& table, const std::vector<std::string>& variables);

struct MiceConfig {
  int imputations = 5;  // m
  int cycles = 10;
  std::vector<std::string> columns;  // empty = every column
  bool include_time = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Chained equations with a normal Bayesian linear model per column.
ImputationMethodResult mice_impute(const ObservationTable& table, const MiceConfig& config);

/// One GP in time per variable, fitted on that variable's observed cells.
ImputationMethodResult independent_gp_impute(const ObservationTable& table, const std::string& variable,
                                             const FitConfig& config);
ImputationMethodResult independent_gp_impute(const ObservationTable& table,
                                             const std::vector<std::string>& variables, const FitConfig& config);

}  // namespace dgpsi
