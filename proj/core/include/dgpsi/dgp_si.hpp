#pragma once

// Deep GP emulation by stochastic imputation.
//
// Training alternates elliptical slice sampling of the unobserved latent
// cells with per-node maximum-likelihood refits (stochastic EM). The trained
// emulator holds N_imp imputed latent layers; each turns the deep GP into an
// ordinary linked GP, and predictions mix the N_imp linked-GP moments:
//
//     mean     = (1/N_imp) sum_i mu_i
//     variance = (1/N_imp) sum_i (mu_i^2 + s2_i) - mean^2
//
// Observed latent cells are never resampled. The prior for each latent
// column is its first-layer GP conditioned on the column's observed cells;
// the likelihood is the output-layer GP density of y given all latents.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgpsi/gp.hpp"
#include "dgpsi/linked_gp.hpp"
#include "dgpsi/random.hpp"
#include "dgpsi/table.hpp"
#include "dgpsi/types.hpp"

namespace dgpsi {

struct SEMConfig {
  int iterations = 500;
  int burn_in = 300;
  int ess_sweeps = 10;          // ESS sweeps over all latent columns per iteration
  int imputations = 50;         // N_imp
  int imputation_sweeps = 10;   // sweeps between the final state and each stored draw
  int mstep_iterations = 10;    // quasi-Newton steps per node refit
  bool random_sweep_order = false;
  int threads = 1;              // 0 = hardware concurrency
  std::uint64_t seed = 0;
  FitConfig fit;

  void validate() const;
};

/// Training data for one two-layer DGP: rows are time points with an
/// observed output. Latent cells flagged false in `observed` are imputed.
struct SemData {
  Eigen::MatrixXd X;       // N x D inputs
  Eigen::VectorXd y;       // N outputs, complete
  Eigen::MatrixXd latent;  // N x P, values ignored where not observed
  BoolMatrix observed;     // N x P
};

/// One complete draw of the latent layer.
struct LayerImputation {
  Eigen::MatrixXd values;
  BoolMatrix fixed_mask;  // true where the cell is observed data
  int draw_index = 0;
};

struct EnsemblePrediction {
  PredictiveGaussian mixture;
  std::vector<PredictiveGaussian> components;
};

/// Mixture moments of equally weighted Gaussian components.
PredictiveGaussian mix_components(std::span<const PredictiveGaussian> components);

/// Holds the latent layer during sampling, together with the conditional
/// Gaussian prior of each column's unobserved cells.
class LatentSampler {
 public:
  LatentSampler(SemData data, std::vector<GPHyperparams> first_layer, GPHyperparams second_layer);

  /// Replaces hyperparameters and rebuilds the conditional priors.
  void set_hyperparams(std::vector<GPHyperparams> first_layer, GPHyperparams second_layer);

  /// One ESS update of the free cells of column p.
  void update_column(std::size_t p, Rng& rng);
  /// One ESS update per column, in order 0..P-1 or shuffled.
  void sweep(Rng& rng, bool random_order = false);

  const Eigen::MatrixXd& values() const { return latent_; }
  const SemData& data() const { return data_; }
  const BoolMatrix& observed() const { return data_.observed; }
  std::size_t free_cells() const;
  long likelihood_evaluations() const { return evaluations_; }
  /// Output-layer log density of y given a full latent matrix.
  double output_loglik(const Eigen::MatrixXd& latent) const;

 private:
  struct ColumnPrior {
    std::vector<Eigen::Index> free_rows;
    Eigen::VectorXd mean;
    Eigen::MatrixXd factor;
  };

  void build_priors();

  SemData data_;
  Eigen::MatrixXd latent_;
  std::vector<GPHyperparams> first_;
  GPHyperparams second_;
  std::vector<ColumnPrior> priors_;
  long evaluations_ = 0;
};

/// One sweep of ESS updates over all latent columns.
LayerImputation impute_latents(LatentSampler& sampler, Rng& rng, int draw_index = 0);

struct SemDiagnostics {
  std::size_t free_cells = 0;
  long likelihood_evaluations = 0;
  int iterations_run = 0;
  std::vector<double> output_loglik_trace;  // after each iteration's E-step
};

class DGPSIEmulator {
 public:
  DGPSIEmulator(LayerArchitecture arch, SemData data, std::vector<GPHyperparams> hyper,
                std::vector<LayerImputation> imputations, SEMConfig config);

  const LayerArchitecture& architecture() const { return arch_; }
  const SemData& data() const { return data_; }
  /// Latent nodes first, output node last.
  const std::vector<GPHyperparams>& hyperparams() const { return hyper_; }
  const std::vector<LayerImputation>& imputations() const { return imputations_; }
  const std::vector<LinkedEmulator>& linked() const { return linked_; }
  const SEMConfig& config() const { return config_; }
  std::size_t size() const { return imputations_.size(); }

  SemDiagnostics diagnostics;
  mutable ClampStats clamp_stats;

 private:
  LayerArchitecture arch_;
  SemData data_;
  std::vector<GPHyperparams> hyper_;
  std::vector<LayerImputation> imputations_;
  std::vector<LinkedEmulator> linked_;
  SEMConfig config_;
};

/// Fit configuration used for node `node` (latents 0..P-1, output P) when
/// initialising SEM. With no unobserved latent cells SEM returns exactly
/// these fits.
FitConfig sem_node_fit_config(const SEMConfig& config, const LayerArchitecture& arch, std::size_t node);

DGPSIEmulator train_sem(const SemData& data, const LayerArchitecture& arch, const SEMConfig& config);

/// Selects rows with an observed output and maps architecture node names
/// to table columns.
SemData sem_data_from_table(const ObservationTable& table, const LayerArchitecture& arch);

DGPSIEmulator train_sem(const ObservationTable& table, const LayerArchitecture& arch,
                        const SEMConfig& config);

EnsemblePrediction predict_ensemble(const DGPSIEmulator& em, const Eigen::Ref<const Eigen::VectorXd>& x0);

/// Mixture over imputations of the first-layer posterior of `target` at each
/// query input (rows of `query`).
std::vector<EnsemblePrediction> impute_covariates(const DGPSIEmulator& em, const Eigen::MatrixXd& query,
                                                  const std::string& target);

nlohmann::json dgp_manifest(const DGPSIEmulator& em);
nlohmann::json sem_config_to_json(const SEMConfig& c);
SEMConfig sem_config_from_json(const nlohmann::json& j, SEMConfig base = {});
nlohmann::json fit_config_to_json(const FitConfig& c);
FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig base = {});

/// Writes manifest.json, data.csv and imputations.csv into `dir`.
void save_emulator(const DGPSIEmulator& em, const std::filesystem::path& dir);
DGPSIEmulator load_emulator(const std::filesystem::path& dir);

}  // namespace dgpsi
