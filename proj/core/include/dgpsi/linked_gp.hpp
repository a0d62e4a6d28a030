#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

#include "dgpsi/gp.hpp"
#include "dgpsi/types.hpp"

namespace dgpsi {

struct NodeDescriptor {
  std::string name;
  KernelFamily family = KernelFamily::SquaredExponential;
};

/// Two-layer feed-forward topology: input -> P latent nodes -> one output node.
struct LayerArchitecture {
  Eigen::Index input_dims = 1;
  std::vector<NodeDescriptor> latent_nodes;
  NodeDescriptor output_node;

  std::size_t latent_count() const { return latent_nodes.size(); }
  /// Index of a latent node by name; throws LookupError.
  std::size_t latent_index(const std::string& name) const;
  void validate() const;
};

/// Counts Gaussian-approximation variances that came out negative.
struct ClampStats {
  std::size_t predictions = 0;
  std::size_t clamped = 0;  // violations beyond -1e-10
};

/// Closed-form moments of a second-layer GP whose inputs are independent
/// Gaussians. The second layer must use the squared-exponential kernel.
class LinkedLayer {
 public:
  explicit LinkedLayer(FittedGP gp);

  const FittedGP& gp() const { return gp_; }

  /// I(x0): entry i is prod_p E[k_p(W_p, w_ip)].
  Eigen::VectorXd assemble_I(std::span<const PredictiveGaussian> inputs) const;
  /// J(x0): entry ij is prod_p E[k_p(W_p, w_ip) k_p(W_p, w_jp)].
  Eigen::MatrixXd assemble_J(std::span<const PredictiveGaussian> inputs) const;

  /// Linked mean and variance given Gaussian inputs.
  PredictiveGaussian propagate(std::span<const PredictiveGaussian> inputs) const;

 private:
  FittedGP gp_;
  Eigen::MatrixXd inverse_;  // R(w)^{-1}, used only inside the trace term
};

struct SequentialFitInfo {
  std::vector<Eigen::Index> first_layer_sizes;
  Eigen::Index second_layer_size = 0;
};

/// First-layer GPs (input -> each latent) joined to one output GP.
class LinkedEmulator {
 public:
  LinkedEmulator(LayerArchitecture arch, std::vector<FittedGP> first_layer, FittedGP second_layer);

  const LayerArchitecture& architecture() const { return arch_; }
  const std::vector<FittedGP>& first_layer() const { return first_; }
  const FittedGP& second_layer() const { return second_.gp(); }
  const LinkedLayer& linked_second_layer() const { return second_; }
  const Eigen::MatrixXd& latent_values() const { return second_.gp().training().X; }

  std::vector<PredictiveGaussian> latent_predictions(
      const Eigen::Ref<const Eigen::VectorXd>& x0) const;

  SequentialFitInfo fit_info;

 private:
  LayerArchitecture arch_;
  std::vector<FittedGP> first_;
  LinkedLayer second_;
};

Eigen::VectorXd assemble_I(const LinkedEmulator& em, std::span<const PredictiveGaussian> latent_preds);
Eigen::MatrixXd assemble_J(const LinkedEmulator& em, std::span<const PredictiveGaussian> latent_preds);

/// Linked-GP predictive mean and variance at x0. Negative variances are
/// clamped to zero and tallied in `stats` when provided.
PredictiveGaussian link_predict(const LinkedEmulator& em, const Eigen::Ref<const Eigen::VectorXd>& x0,
                                ClampStats* stats = nullptr);

/// Complete-case sequential fit: each latent column on its own observed rows,
/// then the output node on rows where every latent and y are observed.
/// `latent_observed` and `y_observed` flag observed cells.
LinkedEmulator fit_sequential_lgp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& latent_obs,
                                  const BoolMatrix& latent_observed,
                                  const Eigen::VectorXd& y,
                                  const BoolVector& y_observed,
                                  const LayerArchitecture& arch, const FitConfig& config);

nlohmann::json hyperparams_to_json(const GPHyperparams& h);
GPHyperparams hyperparams_from_json(const nlohmann::json& j);
nlohmann::json gp_manifest(const FittedGP& gp);
nlohmann::json emulator_manifest(const LinkedEmulator& em, const ClampStats& stats = {});
nlohmann::json architecture_to_json(const LayerArchitecture& arch);
LayerArchitecture architecture_from_json(const nlohmann::json& j);

}  // namespace dgpsi
