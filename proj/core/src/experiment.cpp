#include "dgpsi/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dgpsi/errors.hpp"
#include "format.hpp"
#include "parallel.hpp"

#ifndef DGPSI_VERSION
#define DGPSI_VERSION "0.0.0"
#endif

namespace dgpsi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> target_names(const ObservationTable& t, ExperimentMode mode) {
  std::vector<std::string> out;
  if (mode == ExperimentMode::PredictOutput) {
    out.push_back(t.names[static_cast<std::size_t>(t.output_index())]);
  } else {
    for (Eigen::Index c : t.covariate_indices()) out.push_back(t.names[static_cast<std::size_t>(c)]);
  }
  return out;
}

std::uint64_t job_seed(std::uint64_t seed, std::string_view tag, int window, double proportion) {
  const auto p = static_cast<std::uint64_t>(std::llround(proportion * 1e6));
  return derive_seed(derive_seed(seed, tag, static_cast<std::uint64_t>(window)), "proportion", p);
}

Eigen::VectorXd time_point(double t) {
  Eigen::VectorXd x(1);
  x[0] = t;
  return x;
}

std::string proportion_label(double p) {
  std::ostringstream s;
  s << std::llround(p * 100.0);
  return s.str();
}

}  // namespace

std::string_view to_string(ExperimentMode m) {
  return m == ExperimentMode::PredictOutput ? "predict-output" : "impute-covariates";
}

ExperimentMode experiment_mode_from_string(std::string_view name) {
  if (name == "predict-output") return ExperimentMode::PredictOutput;
  if (name == "impute-covariates") return ExperimentMode::ImputeCovariates;
  throw LookupError("unknown mode '" + std::string(name) + "'");
}

LayerArchitecture window_architecture(const ObservationTable& table) {
  LayerArchitecture arch;
  arch.input_dims = 1;
  for (Eigen::Index c : table.covariate_indices())
    arch.latent_nodes.push_back({table.names[static_cast<std::size_t>(c)], KernelFamily::SquaredExponential});
  arch.output_node = {table.names[static_cast<std::size_t>(table.output_index())], KernelFamily::SquaredExponential};
  return arch;
}

double evaluate_mae(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate, const std::vector<Cell>& cells) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
    throw ContractViolation("evaluate_mae: shape mismatch");
  if (cells.empty()) throw ContractViolation("evaluate_mae: no evaluation cells");
  double sum = 0.0;
  for (const Cell& c : cells) {
    if (c.row < 0 || c.row >= truth.rows() || c.col < 0 || c.col >= truth.cols())
      throw ContractViolation("evaluate_mae: cell out of range");
    const double e = estimate(c.row, c.col);
    if (!std::isfinite(e))
      throw IncompleteResultError("evaluate_mae: no estimate at row " + std::to_string(c.row) + ", column " +
                                  std::to_string(c.col));
    sum += std::abs(truth(c.row, c.col) - e);
  }
  return sum / static_cast<double>(cells.size());
}

MethodSummary summarise(Method method, double proportion, const std::vector<double>& window_mae) {
  MethodSummary s;
  s.method = method;
  s.proportion = proportion;
  s.windows = static_cast<int>(window_mae.size());
  if (window_mae.empty()) {
    s.mean_mae = s.standard_error = kNaN;
    return s;
  }
  const double n = static_cast<double>(window_mae.size());
  double sum = 0.0;
  for (double v : window_mae) sum += v;
  s.mean_mae = sum / n;
  if (window_mae.size() > 1) {
    double ss = 0.0;
    for (double v : window_mae) ss += (v - s.mean_mae) * (v - s.mean_mae);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

const MethodSummary* EvaluationReport::find(Method m, double proportion) const {
  for (const auto& s : summary)
    if (s.method == m && std::abs(s.proportion - proportion) < 1e-12) return &s;
  return nullptr;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ContractViolation("experiment: no methods");
  if (proportions.empty()) throw ContractViolation("experiment: no proportions");
  for (double p : proportions)
    if (!(p >= 0.0 && p < 1.0)) throw ContractViolation("experiment: proportions must lie in [0, 1)");
  if (inputs.empty() && windows < 1) throw ContractViolation("experiment: need at least one window");
  if (schema.output.empty()) throw ContractViolation("experiment: schema needs an output column");
  if (mask_unit == MaskUnit::Interval) throw ContractViolation("experiment: interval masking is not a job-grid unit");
  synthetic.validate();
  fit.validate();
  sem.validate();
  mice.validate();
}

std::vector<ObservationTable> load_windows(const ExperimentConfig& config) {
  std::vector<ObservationTable> out;
  if (config.inputs.empty()) {
    for (auto& w : generate_synthetic_windows(config.synthetic, config.windows,
                                              derive_seed(config.seed, "experiment.windows")))
      out.push_back(std::move(w.table));
  } else {
    for (const auto& path : config.inputs)
      out.push_back(discretise_hourly(ingest_csv(path, config.schema), config.schema.output));
  }
  return out;
}

JobResult run_job(const ObservationTable& truth, int window, Method method, double proportion,
                  const ExperimentConfig& config, std::vector<PredictionRow>* predictions) {
  JobResult r;
  r.window = window;
  r.method = method;
  r.proportion = proportion;

  const std::vector<std::string> targets = target_names(truth, config.mode);
  const MaskPlan plan =
      make_mask_plan(truth, proportion, targets, job_seed(config.seed, "experiment.mask", window, proportion),
                     config.mask_unit);
  const ObservationTable masked = apply_mask(truth, plan);
  const auto [z, rec] = standardise(masked);
  const ObservationTable truth_z = rec.apply(truth);

  Eigen::MatrixXd estimate = z.values;
  Eigen::MatrixXd variance = Eigen::MatrixXd::Constant(z.rows(), z.cols(), kNaN);
  const Eigen::Index out_col = z.output_index();
  const auto cov_cols = z.covariate_indices();

  auto adopt = [&](const ImputationMethodResult& res) {
    estimate = res.filled.values;
    if (res.variance) variance = *res.variance;
    r.metadata = res.metadata;
  };

  switch (method) {
    case Method::Locf:
      adopt(locf_impute(z, targets));
      break;
    case Method::Mice: {
      MiceConfig mc = config.mice;
      mc.seed = job_seed(config.seed, "experiment.mice", window, proportion);
      if (config.mode == ExperimentMode::PredictOutput) mc.columns = targets;
      adopt(mice_impute(z, mc));
      break;
    }
    case Method::Gp: {
      FitConfig fc = config.fit;
      fc.seed = job_seed(config.seed, "experiment.gp", window, proportion);
      adopt(independent_gp_impute(z, targets, fc));
      break;
    }
    case Method::Lgp: {
      if (config.mode != ExperimentMode::PredictOutput)
        throw ContractViolation("lgp reduces to independent GPs when imputing covariates");
      const LayerArchitecture arch = window_architecture(z);
      const auto P = static_cast<Eigen::Index>(cov_cols.size());
      Eigen::MatrixXd latent = Eigen::MatrixXd::Zero(z.rows(), P);
      BoolMatrix lobs(z.rows(), P);
      BoolVector yobs = z.observed.col(out_col);
      for (Eigen::Index p = 0; p < P; ++p)
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
          // Rows whose output is hidden keep their covariates hidden too:
          // inference uses time only.
          lobs(i, p) = z.observed(i, cov_cols[static_cast<std::size_t>(p)]) && yobs[i];
          if (lobs(i, p)) latent(i, p) = z.values(i, cov_cols[static_cast<std::size_t>(p)]);
        }
      FitConfig fc = config.fit;
      fc.seed = job_seed(config.seed, "experiment.lgp", window, proportion);
      const LinkedEmulator em = fit_sequential_lgp(z.times, latent, lobs, z.values.col(out_col).unaryExpr([](double v) {
        return std::isnan(v) ? 0.0 : v;
      }), yobs, arch, fc);
      ClampStats stats;
      for (const Cell& c : plan.masked_cells) {
        const PredictiveGaussian p = link_predict(em, time_point(z.times[c.row]), &stats);
        estimate(c.row, c.col) = p.mean;
        variance(c.row, c.col) = p.variance;
      }
      r.metadata = emulator_manifest(em, stats);
      break;
    }
    case Method::Dgp: {
      const LayerArchitecture arch = window_architecture(z);
      SEMConfig sc = config.sem;
      sc.seed = job_seed(config.seed, "experiment.dgp", window, proportion);
      const DGPSIEmulator em = train_sem(z, arch, sc);
      for (const Cell& c : plan.masked_cells) {
        PredictiveGaussian p;
        if (c.col == out_col) {
          p = predict_ensemble(em, time_point(z.times[c.row])).mixture;
        } else {
          Eigen::MatrixXd q(1, 1);
          q(0, 0) = z.times[c.row];
          p = impute_covariates(em, q, z.names[static_cast<std::size_t>(c.col)]).front().mixture;
        }
        estimate(c.row, c.col) = p.mean;
        variance(c.row, c.col) = p.variance;
      }
      r.metadata = {{"free_cells", em.diagnostics.free_cells},
                    {"iterations", em.diagnostics.iterations_run},
                    {"likelihood_evaluations", em.diagnostics.likelihood_evaluations},
                    {"clamped", em.clamp_stats.clamped}};
      break;
    }
  }
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      if (z.observed(i, c)) variance(i, c) = 0.0;

  r.cells = static_cast<int>(plan.masked_cells.size());
  if (plan.masked_cells.empty()) throw ContractViolation("run_job: the mask selected no cells");
  r.mae = evaluate_mae(truth_z.values, estimate, plan.masked_cells);
  double sum = 0.0;
  for (const Cell& c : plan.masked_cells)
    sum += std::abs(truth.values(c.row, c.col) - rec.to_original(c.col, estimate(c.row, c.col)));
  r.mae_original = sum / static_cast<double>(plan.masked_cells.size());
  r.ok = true;

  if (predictions) {
    std::vector<char> is_masked(static_cast<std::size_t>(z.rows() * z.cols()), 0);
    for (const Cell& c : plan.masked_cells) is_masked[static_cast<std::size_t>(c.row * z.cols() + c.col)] = 1;
    for (const auto& name : targets) {
      const Eigen::Index c = z.column_index(name);
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (!truth.observed(i, c)) continue;
        PredictionRow row;
        row.window = window;
        row.method = method;
        row.proportion = proportion;
        row.time = truth.hours[static_cast<std::size_t>(i)] - truth.hours.front();
        row.variable = name;
        row.mean = estimate(i, c);
        row.variance = variance(i, c);
        row.truth = truth_z.values(i, c);
        row.masked = is_masked[static_cast<std::size_t>(i * z.cols() + c)] != 0;
        predictions->push_back(std::move(row));
      }
    }
  }
  return r;
}

EvaluationReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  EvaluationReport report;
  report.config = config;
  std::vector<Method> methods;
  for (Method m : config.methods) {
    if (m == Method::Lgp && config.mode == ExperimentMode::ImputeCovariates) {
      report.notes.push_back("lgp excluded: with covariates as targets it is a set of independent GPs");
      continue;
    }
    methods.push_back(m);
  }
  const std::vector<ObservationTable> windows = load_windows(config);

  struct JobSpec {
    int window;
    double proportion;
    Method method;
  };
  std::vector<JobSpec> specs;
  for (int w = 0; w < static_cast<int>(windows.size()); ++w)
    for (double p : config.proportions)
      for (Method m : methods) specs.push_back({w, p, m});

  std::vector<JobResult> results(specs.size());
  std::vector<std::vector<PredictionRow>> preds(specs.size());
  detail::parallel_for(specs.size(), detail::resolve_threads(config.threads), [&](std::size_t k) {
    const JobSpec& s = specs[k];
    try {
      results[k] = run_job(windows[static_cast<std::size_t>(s.window)], s.window, s.method, s.proportion, config,
                           &preds[k]);
    } catch (const std::exception& e) {
      JobResult r;
      r.window = s.window;
      r.method = s.method;
      r.proportion = s.proportion;
      r.ok = false;
      r.error = e.what();
      r.mae = r.mae_original = kNaN;
      results[k] = std::move(r);
      preds[k].clear();
    }
  });
  report.jobs = std::move(results);
  for (auto& p : preds)
    for (auto& row : p) report.predictions.push_back(std::move(row));

  for (Method m : methods)
    for (double p : config.proportions) {
      std::vector<double> maes;
      double orig = 0.0;
      int failures = 0;
      for (const auto& j : report.jobs) {
        if (j.method != m || j.proportion != p) continue;
        if (j.ok) {
          maes.push_back(j.mae);
          orig += j.mae_original;
        } else {
          ++failures;
        }
      }
      MethodSummary s = summarise(m, p, maes);
      s.failures = failures;
      s.mean_mae_original = maes.empty() ? kNaN : orig / static_cast<double>(maes.size());
      report.summary.push_back(s);
    }
  return report;
}

// ---------------------------------------------------------------------------
// Report IO

nlohmann::json report_to_json(const EvaluationReport& report) {
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : report.summary)
    summary.push_back({{"method", std::string(to_string(s.method))},
                       {"proportion", s.proportion},
                       {"mean_mae", s.mean_mae},
                       {"standard_error", s.standard_error},
                       {"mean_mae_original", s.mean_mae_original},
                       {"windows", s.windows},
                       {"failures", s.failures}});
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& j : report.jobs) {
    nlohmann::json o = {{"window", j.window},
                        {"method", std::string(to_string(j.method))},
                        {"proportion", j.proportion},
                        {"ok", j.ok},
                        {"cells", j.cells}};
    if (j.ok) {
      o["mae"] = j.mae;
      o["mae_original"] = j.mae_original;
      o["metadata"] = j.metadata;
    } else {
      o["error"] = j.error;
    }
    jobs.push_back(std::move(o));
  }
  return {{"manifest",
           {{"tool", "dgpsi"},
            {"version", DGPSI_VERSION},
            {"preprocessing", {"discretise_hourly", "mask", "standardise", "impute", "evaluate"}},
            {"units", "standardised"},
            {"config", experiment_config_to_json(report.config)}}},
          {"summary", summary},
          {"jobs", jobs},
          {"notes", report.notes}};
}

EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport report;
  report.config = experiment_config_from_json(j);
  for (const auto& o : j.at("jobs")) {
    JobResult r;
    r.window = o.at("window").get<int>();
    r.method = method_from_string(o.at("method").get<std::string>());
    r.proportion = o.at("proportion").get<double>();
    r.ok = o.at("ok").get<bool>();
    r.cells = o.value("cells", 0);
    if (r.ok) {
      r.mae = o.at("mae").get<double>();
      r.mae_original = o.value("mae_original", kNaN);
      r.metadata = o.value("metadata", nlohmann::json::object());
    } else {
      r.error = o.value("error", std::string());
      r.mae = r.mae_original = kNaN;
    }
    report.jobs.push_back(std::move(r));
  }
  if (j.contains("notes")) report.notes = j.at("notes").get<std::vector<std::string>>();
  std::vector<Method> methods;
  for (const auto& r : report.jobs)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  for (Method m : methods)
    for (double p : report.config.proportions) {
      std::vector<double> maes;
      double orig = 0.0;
      int failures = 0;
      for (const auto& r : report.jobs) {
        if (r.method != m || r.proportion != p) continue;
        if (r.ok) {
          maes.push_back(r.mae);
          orig += r.mae_original;
        } else {
          ++failures;
        }
      }
      MethodSummary s = summarise(m, p, maes);
      s.failures = failures;
      s.mean_mae_original = maes.empty() ? kNaN : orig / static_cast<double>(maes.size());
      report.summary.push_back(s);
    }
  return report;
}

void write_results_csv(const EvaluationReport& report, std::ostream& out) {
  out << "window,method,proportion,mae\n";
  for (const auto& j : report.jobs)
    out << j.window << ',' << to_string(j.method) << ',' << detail::format_double(j.proportion) << ','
        << (j.ok ? detail::format_double(j.mae) : std::string()) << '\n';
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, std::ostream& out) {
  out << "window,time,variable,mean,variance,truth,masked\n";
  for (const auto& r : rows)
    out << r.window << ',' << detail::format_double(r.time) << ',' << r.variable << ','
        << detail::format_double(r.mean) << ',' << detail::format_double(r.variance) << ','
        << detail::format_double(r.truth) << ',' << (r.masked ? 1 : 0) << '\n';
}

void write_report(const EvaluationReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "results.csv");
    write_results_csv(report, out);
  }
  std::ofstream(dir / "report.json") << report_to_json(report).dump(2) << '\n';
  std::map<std::pair<int, long long>, std::vector<PredictionRow>> groups;
  for (const auto& r : report.predictions)
    groups[{static_cast<int>(r.method), std::llround(r.proportion * 1e6)}].push_back(r);
  for (const auto& [key, rows] : groups) {
    const std::string name = "predictions_" + std::string(to_string(rows.front().method)) + "_" +
                             proportion_label(rows.front().proportion) + ".csv";
    std::ofstream out(dir / name);
    write_predictions_csv(rows, out);
  }
}

// ---------------------------------------------------------------------------

CouplingTrial uncertainty_coupling_trial(const ObservationTable& window, const std::string& target,
                                         const std::vector<std::pair<double, double>>& intervals,
                                         const SEMConfig& sem) {
  const LayerArchitecture arch = window_architecture(window);
  std::vector<std::string> covariates;
  for (const auto& node : arch.latent_nodes) covariates.push_back(node.name);

  auto average_variance = [&](const std::vector<std::string>& targets, int* cells) {
    const MaskPlan plan = make_interval_mask_plan(window, intervals, targets);
    const auto [z, rec] = standardise(apply_mask(window, plan));
    const DGPSIEmulator em = train_sem(z, arch, sem);
    const Eigen::Index col = z.column_index(target);
    std::vector<double> times;
    for (const Cell& c : plan.masked_cells)
      if (c.col == col) times.push_back(z.times[c.row]);
    if (times.empty()) throw ContractViolation("coupling trial: no target cells inside the intervals");
    const Eigen::MatrixXd q = Eigen::Map<const Eigen::MatrixXd>(times.data(), static_cast<Eigen::Index>(times.size()), 1);
    double sum = 0.0;
    for (const auto& e : impute_covariates(em, q, target)) sum += e.mixture.variance;
    *cells = static_cast<int>(times.size());
    return sum / static_cast<double>(times.size());
  };

  CouplingTrial t;
  int cells_all = 0;
  t.variance_all_masked = average_variance(covariates, &cells_all);
  t.variance_target_masked = average_variance({target}, &t.cells);
  return t;
}

}  // namespace dgpsi
