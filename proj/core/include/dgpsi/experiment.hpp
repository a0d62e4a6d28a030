#pragma once

// Masking experiments over admission windows. Each (window, method,
// proportion) job runs: mask -> standardise on post-mask observed cells ->
// impute -> MAE over masked cells in standardised units.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dgpsi/baselines.hpp"
#include "dgpsi/dgp_si.hpp"
#include "dgpsi/linked_gp.hpp"
#include "dgpsi/synthetic.hpp"
#include "dgpsi/table.hpp"

namespace dgpsi {

enum class ExperimentMode { PredictOutput, ImputeCovariates };

std::string_view to_string(ExperimentMode m);
ExperimentMode experiment_mode_from_string(std::string_view name);

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::PredictOutput;
  std::vector<Method> methods{Method::Locf, Method::Mice, Method::Gp, Method::Lgp, Method::Dgp};
  std::vector<double> proportions{0.1, 0.2, 0.3, 0.4};
  int windows = 20;  // synthetic windows; ignored when `inputs` is set
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;  // CSV files, one admission window each
  SchemaConfig schema{"time", {"pH", "pCO2", "SID", "lactate"}, "pH"};
  SyntheticConfig synthetic;
  FitConfig fit;
  SEMConfig sem;
  MiceConfig mice;
  MaskUnit mask_unit = MaskUnit::Cell;
  int threads = 1;  // parallel jobs; 0 = hardware concurrency

  void validate() const;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
/// Accepts either a config object or a report JSON carrying a "manifest".
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Two-layer architecture: time -> covariates -> output, SE kernels.
LayerArchitecture window_architecture(const ObservationTable& table);

/// MAE over `cells` between `truth` and `estimate` (same shape). Throws
/// IncompleteResultError when an estimate is missing.
double evaluate_mae(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate, const std::vector<Cell>& cells);

struct MethodSummary {
  Method method = Method::Locf;
  double proportion = 0.0;
  double mean_mae = 0.0;
  double standard_error = 0.0;  // sample sd across windows / sqrt(windows)
  double mean_mae_original = 0.0;
  int windows = 0;
  int failures = 0;
};

/// Mean and standard error across windows.
MethodSummary summarise(Method method, double proportion, const std::vector<double>& window_mae);

struct JobResult {
  int window = 0;
  Method method = Method::Locf;
  double proportion = 0.0;
  bool ok = false;
  std::string error;
  double mae = 0.0;           // standardised units
  double mae_original = 0.0;  // original units
  int cells = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

struct PredictionRow {
  int window = 0;
  Method method = Method::Locf;
  double proportion = 0.0;
  double time = 0.0;  // hours from the window's first bucket
  std::string variable;
  double mean = 0.0;
  double variance = 0.0;  // NaN when the method has none
  double truth = 0.0;
  bool masked = false;
};

struct EvaluationReport {
  ExperimentConfig config;
  std::vector<JobResult> jobs;         // window-major, then proportion, then method
  std::vector<MethodSummary> summary;  // method-major, then proportion
  std::vector<PredictionRow> predictions;
  std::vector<std::string> notes;

  const MethodSummary* find(Method m, double proportion) const;
};

/// Windows in original units, discretised hourly.
std::vector<ObservationTable> load_windows(const ExperimentConfig& config);

/// One job. `truth` is the unmasked window in original units.
JobResult run_job(const ObservationTable& truth, int window, Method method, double proportion,
                  const ExperimentConfig& config, std::vector<PredictionRow>* predictions = nullptr);

EvaluationReport run_experiment(const ExperimentConfig& config);

nlohmann::json report_to_json(const EvaluationReport& report);
/// Rebuilds summaries from the job list of a report JSON.
EvaluationReport report_from_json(const nlohmann::json& j);

void write_results_csv(const EvaluationReport& report, std::ostream& out);
void write_predictions_csv(const std::vector<PredictionRow>& rows, std::ostream& out);
/// results.csv, report.json and predictions_<method>_<proportion>.csv.
void write_report(const EvaluationReport& report, const std::filesystem::path& dir);

/// Predictive variance of `target` averaged over the target's cells inside
/// `intervals`, when every covariate is masked there and when only the
/// target is.
struct CouplingTrial {
  double variance_all_masked = 0.0;
  double variance_target_masked = 0.0;
  int cells = 0;
};

CouplingTrial uncertainty_coupling_trial(const ObservationTable& window, const std::string& target,
                                         const std::vector<std::pair<double, double>>& intervals,
                                         const SEMConfig& sem);

}  // namespace dgpsi
