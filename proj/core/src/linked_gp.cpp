#include "dgpsi/linked_gp.hpp"

#include <cmath>
#include <set>

#include "dgpsi/errors.hpp"
#include "dgpsi/random.hpp"

namespace dgpsi {

namespace {

constexpr double kClampTolerance = -1e-10;

void check_inputs(const FittedGP& gp, std::span<const PredictiveGaussian> inputs) {
  if (static_cast<Eigen::Index>(inputs.size()) != gp.input_dims())
    throw ContractViolation("linked layer: expected one Gaussian input per second-layer dimension");
  for (const auto& in : inputs) {
    if (!std::isfinite(in.mean) || !std::isfinite(in.variance) || in.variance < 0.0)
      throw ContractViolation("linked layer: Gaussian inputs must be finite with variance >= 0");
  }
}

}  // namespace

std::size_t LayerArchitecture::latent_index(const std::string& name) const {
  for (std::size_t p = 0; p < latent_nodes.size(); ++p)
    if (latent_nodes[p].name == name) return p;
  throw LookupError("no latent node named '" + name + "'");
}

void LayerArchitecture::validate() const {
  if (input_dims < 1) throw ContractViolation("architecture: input_dims must be >= 1");
  if (latent_nodes.empty()) throw ContractViolation("architecture: need at least one latent node");
  std::set<std::string> names;
  for (const auto& n : latent_nodes) {
    if (!names.insert(n.name).second)
      throw ContractViolation("architecture: duplicate node name '" + n.name + "'");
  }
  if (names.count(output_node.name))
    throw ContractViolation("architecture: output node name clashes with a latent node");
}

LinkedLayer::LinkedLayer(FittedGP gp) : gp_(std::move(gp)) {
  if (gp_.hyper().kernel.family != KernelFamily::SquaredExponential)
    throw NotImplementedError(
        "linked GP: closed-form expectations exist only for the squared-exponential kernel");
  inverse_ = gp_.corr().inverse();
}

Eigen::VectorXd LinkedLayer::assemble_I(std::span<const PredictiveGaussian> inputs) const {
  check_inputs(gp_, inputs);
  const Eigen::MatrixXd& W = gp_.training().X;
  const Eigen::VectorXd& ls = gp_.hyper().kernel.lengthscales;
  Eigen::VectorXd I = Eigen::VectorXd::Ones(W.rows());
  for (Eigen::Index p = 0; p < W.cols(); ++p) {
    const auto& in = inputs[static_cast<std::size_t>(p)];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      I[i] *= expect_k(KernelFamily::SquaredExponential, ls[p], in.mean, in.variance, W(i, p));
  }
  return I;
}

Eigen::MatrixXd LinkedLayer::assemble_J(std::span<const PredictiveGaussian> inputs) const {
  check_inputs(gp_, inputs);
  const Eigen::MatrixXd& W = gp_.training().X;
  const Eigen::VectorXd& ls = gp_.hyper().kernel.lengthscales;
  const Eigen::Index n = W.rows();
  const Eigen::Index P = W.cols();

  // Each factor of expect_kk is exp(-2 g^2/l^2 - 2 d^2/(l^2+4v)) / sqrt(1+4v/l^2),
  // so the product over p collapses into a single exponential per pair.
  double prefactor = 1.0;
  Eigen::VectorXd a(P), b(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const double l2 = ls[p] * ls[p];
    const double v = inputs[static_cast<std::size_t>(p)].variance;
    prefactor /= std::sqrt(1.0 + 4.0 * v / l2);
    a[p] = 2.0 / l2;
    b[p] = 2.0 / (l2 + 4.0 * v);
  }
  Eigen::MatrixXd J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      double e = 0.0;
      for (Eigen::Index p = 0; p < P; ++p) {
        const double g = 0.5 * (W(i, p) - W(j, p));
        const double d = inputs[static_cast<std::size_t>(p)].mean - 0.5 * (W(i, p) + W(j, p));
        e += a[p] * g * g + b[p] * d * d;
      }
      J(i, j) = J(j, i) = prefactor * std::exp(-e);
    }
  }
  return J;
}

PredictiveGaussian LinkedLayer::propagate(std::span<const PredictiveGaussian> inputs) const {
  const Eigen::VectorXd I = assemble_I(inputs);
  const Eigen::MatrixXd J = assemble_J(inputs);
  const Eigen::VectorXd& alpha = gp_.alpha();
  const double mean = I.dot(alpha);
  const double trace = inverse_.cwiseProduct(J).sum();
  const auto& h = gp_.hyper();
  double var = alpha.dot(J * alpha) - mean * mean + h.scale * (1.0 + h.nugget - trace);
  PredictiveGaussian out;
  out.mean = mean;
  if (var < 0.0) {
    out.clamped = var < kClampTolerance;
    var = 0.0;
  }
  out.variance = var;
  return out;
}

LinkedEmulator::LinkedEmulator(LayerArchitecture arch, std::vector<FittedGP> first_layer,
                               FittedGP second_layer)
    : arch_(std::move(arch)), first_(std::move(first_layer)), second_(std::move(second_layer)) {
  arch_.validate();
  if (first_.size() != arch_.latent_count())
    throw ContractViolation("linked emulator: one first-layer GP per latent node required");
  if (second_.gp().input_dims() != static_cast<Eigen::Index>(arch_.latent_count()))
    throw ContractViolation("linked emulator: second layer must take every latent as input");
  for (const auto& gp : first_) {
    if (gp.input_dims() != arch_.input_dims)
      throw ContractViolation("linked emulator: first-layer input dimension mismatch");
  }
}

std::vector<PredictiveGaussian> LinkedEmulator::latent_predictions(
    const Eigen::Ref<const Eigen::VectorXd>& x0) const {
  std::vector<PredictiveGaussian> out;
  out.reserve(first_.size());
  for (const auto& gp : first_) out.push_back(gp.predict(x0));
  return out;
}

Eigen::VectorXd assemble_I(const LinkedEmulator& em, std::span<const PredictiveGaussian> latent_preds) {
  return em.linked_second_layer().assemble_I(latent_preds);
}

Eigen::MatrixXd assemble_J(const LinkedEmulator& em, std::span<const PredictiveGaussian> latent_preds) {
  return em.linked_second_layer().assemble_J(latent_preds);
}

PredictiveGaussian link_predict(const LinkedEmulator& em, const Eigen::Ref<const Eigen::VectorXd>& x0,
                                ClampStats* stats) {
  const auto latent = em.latent_predictions(x0);
  const PredictiveGaussian out = em.linked_second_layer().propagate(latent);
  if (stats) {
    ++stats->predictions;
    if (out.clamped) ++stats->clamped;
  }
  return out;
}

LinkedEmulator fit_sequential_lgp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& latent_obs,
                                  const BoolMatrix& latent_observed,
                                  const Eigen::VectorXd& y,
                                  const BoolVector& y_observed,
                                  const LayerArchitecture& arch, const FitConfig& config) {
  arch.validate();
  const Eigen::Index n = X.rows();
  const Eigen::Index P = static_cast<Eigen::Index>(arch.latent_count());
  if (latent_obs.rows() != n || latent_obs.cols() != P || latent_observed.rows() != n ||
      latent_observed.cols() != P || y.size() != n || y_observed.size() != n)
    throw ContractViolation("fit_sequential_lgp: shape mismatch");
  if (X.cols() != arch.input_dims) throw ContractViolation("fit_sequential_lgp: input dims mismatch");

  SequentialFitInfo info;
  std::vector<FittedGP> first;
  for (Eigen::Index p = 0; p < P; ++p) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (latent_observed(i, p)) rows.push_back(i);
    if (rows.size() < 2)
      throw SequentialFitError("fit_sequential_lgp: latent '" +
                               arch.latent_nodes[static_cast<std::size_t>(p)].name +
                               "' has fewer than two observations");
    Eigen::MatrixXd Xp(static_cast<Eigen::Index>(rows.size()), X.cols());
    Eigen::VectorXd wp(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Xp.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
      wp[static_cast<Eigen::Index>(k)] = latent_obs(rows[k], p);
    }
    FitConfig c = config;
    c.family = arch.latent_nodes[static_cast<std::size_t>(p)].family;
    c.seed = derive_seed(config.seed, "lgp.first", static_cast<std::uint64_t>(p));
    first.push_back(fit_gp(Xp, wp, c));
    info.first_layer_sizes.push_back(static_cast<Eigen::Index>(rows.size()));
  }

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i)
    if (y_observed[i] && latent_observed.row(i).all()) rows.push_back(i);
  if (rows.size() < 2)
    throw SequentialFitError("fit_sequential_lgp: fewer than two complete rows for the output node");
  Eigen::MatrixXd W(static_cast<Eigen::Index>(rows.size()), P);
  Eigen::VectorXd yc(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    W.row(static_cast<Eigen::Index>(k)) = latent_obs.row(rows[k]);
    yc[static_cast<Eigen::Index>(k)] = y[rows[k]];
  }
  FitConfig c = config;
  c.family = arch.output_node.family;
  c.seed = derive_seed(config.seed, "lgp.second");
  FittedGP second = fit_gp(W, yc, c);
  info.second_layer_size = static_cast<Eigen::Index>(rows.size());

  LinkedEmulator em(arch, std::move(first), std::move(second));
  em.fit_info = std::move(info);
  return em;
}

nlohmann::json hyperparams_to_json(const GPHyperparams& h) {
  std::vector<double> ls(h.kernel.lengthscales.data(),
                         h.kernel.lengthscales.data() + h.kernel.lengthscales.size());
  return {{"kernel", std::string(to_string(h.kernel.family))},
          {"lengthscales", ls},
          {"scale", h.scale},
          {"nugget", h.nugget}};
}

GPHyperparams hyperparams_from_json(const nlohmann::json& j) {
  GPHyperparams h;
  h.kernel.family = kernel_family_from_string(j.at("kernel").get<std::string>());
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  h.kernel.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  h.scale = j.at("scale").get<double>();
  h.nugget = j.at("nugget").get<double>();
  h.validate();
  return h;
}

nlohmann::json gp_manifest(const FittedGP& gp) {
  return {{"hyperparams", hyperparams_to_json(gp.hyper())},
          {"training_size", gp.size()},
          {"input_dims", gp.input_dims()},
          {"jitter", gp.corr().jitter_applied()},
          {"log_likelihood", gp.diagnostics().log_likelihood}};
}

nlohmann::json architecture_to_json(const LayerArchitecture& arch) {
  nlohmann::json latents = nlohmann::json::array();
  for (const auto& n : arch.latent_nodes)
    latents.push_back({{"name", n.name}, {"kernel", std::string(to_string(n.family))}});
  return {{"input_dims", arch.input_dims},
          {"latent_nodes", latents},
          {"output_node",
           {{"name", arch.output_node.name},
            {"kernel", std::string(to_string(arch.output_node.family))}}}};
}

LayerArchitecture architecture_from_json(const nlohmann::json& j) {
  LayerArchitecture a;
  a.input_dims = j.at("input_dims").get<Eigen::Index>();
  for (const auto& n : j.at("latent_nodes"))
    a.latent_nodes.push_back(
        {n.at("name").get<std::string>(), kernel_family_from_string(n.at("kernel").get<std::string>())});
  const auto& o = j.at("output_node");
  a.output_node = {o.at("name").get<std::string>(),
                   kernel_family_from_string(o.at("kernel").get<std::string>())};
  a.validate();
  return a;
}

nlohmann::json emulator_manifest(const LinkedEmulator& em, const ClampStats& stats) {
  nlohmann::json first = nlohmann::json::array();
  for (std::size_t p = 0; p < em.first_layer().size(); ++p) {
    auto m = gp_manifest(em.first_layer()[p]);
    m["node"] = em.architecture().latent_nodes[p].name;
    first.push_back(std::move(m));
  }
  auto second = gp_manifest(em.second_layer());
  second["node"] = em.architecture().output_node.name;
  return {{"architecture", architecture_to_json(em.architecture())},
          {"first_layer", first},
          {"second_layer", second},
          {"clamp", {{"predictions", stats.predictions}, {"clamped", stats.clamped}}}};
}

}  // namespace dgpsi
