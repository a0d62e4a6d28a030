#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "dgpsi/dgp_si.hpp"
#include "dgpsi/errors.hpp"
#include "dgpsi/experiment.hpp"
#include "dgpsi/synthetic.hpp"
#include "dgpsi/table.hpp"

namespace fs = std::filesystem;
using namespace dgpsi;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::vector<std::string> methods;
  std::vector<double> proportions;
  std::optional<int> windows;
  std::optional<int> threads;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON config file (or a report.json to rerun)");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--mode", o.mode, "predict-output | impute-covariates");
  cmd->add_option("--methods", o.methods, "Methods: locf,mice,gp,lgp,dgp")->delimiter(',');
  cmd->add_option("--proportions", o.proportions, "Masking proportions, e.g. 0.1,0.2")->delimiter(',');
  cmd->add_option("--windows", o.windows, "Number of synthetic windows");
  cmd->add_option("--threads", o.threads, "Parallel jobs (0 = all cores)");
  cmd->add_option("-o,--out", o.out, "Output directory");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.mode.empty()) c.mode = experiment_mode_from_string(o.mode);
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : o.methods) c.methods.push_back(method_from_string(m));
  }
  if (!o.proportions.empty()) c.proportions = o.proportions;
  if (o.windows) c.windows = *o.windows;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

void print_summary(const EvaluationReport& r) {
  std::printf("%-6s %10s %12s %12s %8s %8s\n", "method", "proportion", "mean_mae", "std_err", "windows", "failed");
  for (const auto& s : r.summary)
    std::printf("%-6s %10.2f %12.5f %12.5f %8d %8d\n", std::string(to_string(s.method)).c_str(), s.proportion,
                s.mean_mae, s.standard_error, s.windows, s.failures);
  for (const auto& n : r.notes) std::printf("note: %s\n", n.c_str());
}

int cmd_generate(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  fs::create_directories(o.out);
  const auto windows = generate_synthetic_windows(c.synthetic, c.windows, derive_seed(c.seed, "experiment.windows"));
  nlohmann::json index = {{"seed", c.seed}, {"synthetic", synthetic_config_to_json(c.synthetic)}, {"windows", nlohmann::json::array()}};
  for (std::size_t w = 0; w < windows.size(); ++w) {
    char name[32];
    std::snprintf(name, sizeof name, "window_%03zu.csv", w);
    std::ofstream out(fs::path(o.out) / name);
    write_csv(windows[w].raw, out, c.schema.time_column);
    index["windows"].push_back({{"file", name}, {"rows", windows[w].table.rows()}, {"panels", windows[w].raw.hours.size()}});
  }
  std::ofstream(fs::path(o.out) / "windows.json") << index.dump(2) << '\n';
  std::printf("wrote %zu windows to %s\n", windows.size(), o.out.c_str());
  return 0;
}

int cmd_preprocess(const Overrides& o, const std::string& input) {
  const ExperimentConfig c = resolve(o);
  const ObservationTable grid = discretise_hourly(ingest_csv(input, c.schema), c.schema.output);
  const auto [z, rec] = standardise(grid);
  fs::create_directories(o.out);
  std::ofstream out(fs::path(o.out) / "standardised.csv");
  out << "hour,time";
  for (const auto& n : z.names) out << ',' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out << z.hours[static_cast<std::size_t>(i)] << ',' << z.times[i];
    for (Eigen::Index col = 0; col < z.cols(); ++col) {
      out << ',';
      if (z.observed(i, col)) out << z.values(i, col);
    }
    out << '\n';
  }
  nlohmann::json stats = nlohmann::json::object();
  for (std::size_t k = 0; k < rec.names.size(); ++k)
    stats[rec.names[k]] = {{"mean", rec.mean[static_cast<Eigen::Index>(k)]}, {"sd", rec.sd[static_cast<Eigen::Index>(k)]}};
  std::ofstream(fs::path(o.out) / "standardisation.json") << stats.dump(2) << '\n';
  std::printf("%lld hourly rows, %zu columns\n", static_cast<long long>(z.rows()), z.names.size());
  return 0;
}

int cmd_run(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  const EvaluationReport r = run_experiment(c);
  write_report(r, o.out);
  print_summary(r);
  return 0;
}

int cmd_report(const Overrides& o, const std::string& input) {
  std::ifstream in(input);
  if (!in) throw Error("cannot open '" + input + "'");
  const EvaluationReport r = report_from_json(nlohmann::json::parse(in));
  print_summary(r);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream out(fs::path(o.out) / "results.csv");
    write_results_csv(r, out);
  }
  return 0;
}

int cmd_inspect(const std::string& target) {
  const fs::path p(target);
  if (fs::is_directory(p)) {
    std::cout << dgp_manifest(load_emulator(p)).dump(2) << '\n';
    return 0;
  }
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + target + "'");
  const auto j = nlohmann::json::parse(in);
  std::cout << (j.contains("manifest") ? j.at("manifest") : j).dump(2) << '\n';
  return 0;
}

int cmd_fit(const Overrides& o, const std::string& input) {
  const ExperimentConfig c = resolve(o);
  const ObservationTable grid = discretise_hourly(ingest_csv(input, c.schema), c.schema.output);
  const auto [z, rec] = standardise(grid);
  SEMConfig sem = c.sem;
  sem.seed = c.seed;
  const DGPSIEmulator em = train_sem(z, window_architecture(z), sem);
  save_emulator(em, o.out);
  std::printf("trained on %lld rows, %zu free latent cells; saved to %s\n",
              static_cast<long long>(em.data().X.rows()), em.diagnostics.free_cells, o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep GP emulation by stochastic imputation for sparse clinical time series"};
  app.require_subcommand(1);

  Overrides gen_o, pre_o, run_o, rep_o, fit_o;
  std::string pre_input, rep_input, inspect_target, fit_input;

  auto* gen = app.add_subcommand("generate", "Write synthetic admission windows as CSV");
  add_common(gen, gen_o);
  auto* pre = app.add_subcommand("preprocess", "Discretise and standardise one window CSV");
  add_common(pre, pre_o);
  pre->add_option("input", pre_input, "Window CSV")->required();
  auto* run = app.add_subcommand("run", "Run a masking experiment");
  add_common(run, run_o);
  auto* rep = app.add_subcommand("report", "Re-aggregate a report.json");
  add_common(rep, rep_o);
  rep_o.out.clear();
  rep->add_option("input", rep_input, "report.json")->required();
  auto* ins = app.add_subcommand("inspect", "Print an emulator or report manifest");
  ins->add_option("target", inspect_target, "Emulator directory or report.json")->required();
  auto* fit = app.add_subcommand("fit", "Train a DGP emulator on one window CSV and save it");
  add_common(fit, fit_o);
  fit->add_option("input", fit_input, "Window CSV")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(gen_o);
    if (*pre) return cmd_preprocess(pre_o, pre_input);
    if (*run) return cmd_run(run_o);
    if (*rep) return cmd_report(rep_o, rep_input);
    if (*ins) return cmd_inspect(inspect_target);
    if (*fit) return cmd_fit(fit_o, fit_input);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
