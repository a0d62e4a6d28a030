#include "dgpsi/dgp_si.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "dgpsi/errors.hpp"
#include "dgpsi/ess.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace dgpsi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double gaussian_loglik_from_corr(const Eigen::MatrixXd& R, const Eigen::VectorXd& y, double scale) {
  double jitter = 0.0;
  Eigen::MatrixXd L;
  try {
    L = cholesky_with_jitter(R, &jitter);
  } catch (const SingularMatrixError&) {
    return kNegInf;
  }
  const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(y);
  const double n = static_cast<double>(y.size());
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() / scale + logdet + n * std::log(scale) + n * kLog2Pi);
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& A, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = A.row(rows[k]);
  return out;
}

void check_data(const SemData& d, const LayerArchitecture& arch) {
  const Eigen::Index n = d.X.rows();
  const auto P = static_cast<Eigen::Index>(arch.latent_count());
  if (d.y.size() != n || d.latent.rows() != n || d.observed.rows() != n)
    throw ContractViolation("SEM data: row counts disagree");
  if (d.latent.cols() != P || d.observed.cols() != P)
    throw ContractViolation("SEM data: latent column count differs from the architecture");
  if (d.X.cols() != arch.input_dims) throw ContractViolation("SEM data: input dimension mismatch");
  if (!d.X.allFinite() || !d.y.allFinite()) throw ContractViolation("SEM data: inputs and outputs must be finite");
  for (Eigen::Index p = 0; p < P; ++p)
    for (Eigen::Index i = 0; i < n; ++i)
      if (d.observed(i, p) && !std::isfinite(d.latent(i, p)))
        throw ContractViolation("SEM data: observed latent cell is not finite");
}

GPHyperparams geometric_mean(const std::vector<GPHyperparams>& hs, bool average_nugget) {
  GPHyperparams out = hs.back();
  const double n = static_cast<double>(hs.size());
  Eigen::VectorXd log_ls = Eigen::VectorXd::Zero(out.kernel.dims());
  double log_scale = 0.0, log_nugget = 0.0;
  for (const auto& h : hs) {
    log_ls += h.kernel.lengthscales.array().log().matrix();
    log_scale += std::log(h.scale);
    if (average_nugget) log_nugget += std::log(h.nugget);
  }
  out.kernel.lengthscales = (log_ls / n).array().exp();
  out.scale = std::exp(log_scale / n);
  if (average_nugget) out.nugget = std::exp(log_nugget / n);
  return out;
}

}  // namespace

void SEMConfig::validate() const {
  if (iterations < 0 || burn_in < 0 || burn_in > iterations)
    throw ContractViolation("SEMConfig: need 0 <= burn_in <= iterations");
  if (ess_sweeps < 1) throw ContractViolation("SEMConfig: ess_sweeps must be >= 1");
  if (imputations < 1) throw ContractViolation("SEMConfig: imputations must be >= 1");
  if (imputation_sweeps < 0) throw ContractViolation("SEMConfig: imputation_sweeps must be >= 0");
  if (mstep_iterations < 1) throw ContractViolation("SEMConfig: mstep_iterations must be >= 1");
  fit.validate();
}

PredictiveGaussian mix_components(std::span<const PredictiveGaussian> components) {
  if (components.empty()) throw ContractViolation("mix_components: no components");
  if (components.size() == 1) return {components[0].mean, components[0].variance, false};
  const double n = static_cast<double>(components.size());
  double mean_sum = 0.0, second_sum = 0.0;
  for (const auto& c : components) {
    mean_sum += c.mean;
    second_sum += c.mean * c.mean + c.variance;
  }
  PredictiveGaussian out;
  out.mean = mean_sum / n;
  const double v = second_sum / n - out.mean * out.mean;
  out.variance = v > 0.0 ? v : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// LatentSampler

LatentSampler::LatentSampler(SemData data, std::vector<GPHyperparams> first_layer,
                             GPHyperparams second_layer)
    : data_(std::move(data)), latent_(data_.latent), first_(std::move(first_layer)),
      second_(std::move(second_layer)) {
  if (static_cast<Eigen::Index>(first_.size()) != latent_.cols())
    throw ContractViolation("LatentSampler: one hyperparameter set per latent column required");
  if (!latent_.allFinite())
    throw ContractViolation("LatentSampler: initial latent values must be finite everywhere");
  build_priors();
}

void LatentSampler::set_hyperparams(std::vector<GPHyperparams> first_layer, GPHyperparams second_layer) {
  if (first_layer.size() != first_.size())
    throw ContractViolation("LatentSampler: hyperparameter count changed");
  first_ = std::move(first_layer);
  second_ = std::move(second_layer);
  build_priors();
}

std::size_t LatentSampler::free_cells() const {
  return static_cast<std::size_t>((!data_.observed).count());
}

void LatentSampler::build_priors() {
  const Eigen::Index n = latent_.rows();
  priors_.clear();
  for (Eigen::Index p = 0; p < latent_.cols(); ++p) {
    ColumnPrior prior;
    std::vector<Eigen::Index> obs;
    for (Eigen::Index i = 0; i < n; ++i) (data_.observed(i, p) ? obs : prior.free_rows).push_back(i);
    if (!prior.free_rows.empty()) {
      const auto& h = first_[static_cast<std::size_t>(p)];
      const CorrelationMatrix R = build_correlation(h.kernel, h.nugget, data_.X);
      const Eigen::MatrixXd K = h.scale * R.values();
      const auto m = static_cast<Eigen::Index>(prior.free_rows.size());
      const auto o = static_cast<Eigen::Index>(obs.size());
      Eigen::MatrixXd Kmm(m, m), Kmo(m, o), Koo(o, o);
      Eigen::VectorXd wo(o);
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b)
          Kmm(a, b) = K(prior.free_rows[static_cast<std::size_t>(a)], prior.free_rows[static_cast<std::size_t>(b)]);
        for (Eigen::Index b = 0; b < o; ++b)
          Kmo(a, b) = K(prior.free_rows[static_cast<std::size_t>(a)], obs[static_cast<std::size_t>(b)]);
      }
      for (Eigen::Index a = 0; a < o; ++a) {
        wo[a] = latent_(obs[static_cast<std::size_t>(a)], p);
        for (Eigen::Index b = 0; b < o; ++b)
          Koo(a, b) = K(obs[static_cast<std::size_t>(a)], obs[static_cast<std::size_t>(b)]);
      }
      Eigen::MatrixXd cov = Kmm;
      prior.mean = Eigen::VectorXd::Zero(m);
      if (o > 0) {
        const Eigen::MatrixXd Lo = cholesky_with_jitter(Koo);
        const Eigen::MatrixXd A = Lo.triangularView<Eigen::Lower>().solve(Kmo.transpose());  // o x m
        const Eigen::VectorXd zo = Lo.triangularView<Eigen::Lower>().solve(wo);
        prior.mean = A.transpose() * zo;
        cov -= A.transpose() * A;
      }
      cov = 0.5 * (cov + cov.transpose());
      prior.factor = cholesky_with_jitter(cov);
    }
    priors_.push_back(std::move(prior));
  }
}

double LatentSampler::output_loglik(const Eigen::MatrixXd& latent) const {
  try {
    const CorrelationMatrix R = build_correlation(second_.kernel, second_.nugget, latent);
    const Eigen::VectorXd z = R.factor().triangularView<Eigen::Lower>().solve(data_.y);
    const double n = static_cast<double>(data_.y.size());
    return -0.5 * (z.squaredNorm() / second_.scale + R.log_determinant() +
                   n * std::log(second_.scale) + n * kLog2Pi);
  } catch (const SingularMatrixError&) {
    return kNegInf;
  }
}

void LatentSampler::update_column(std::size_t p, Rng& rng) {
  const ColumnPrior& prior = priors_.at(p);
  if (prior.free_rows.empty()) return;
  const Eigen::Index n = latent_.rows();
  const auto col = static_cast<Eigen::Index>(p);

  LogLikelihood loglik;
  Eigen::MatrixXd other, base;
  Eigen::VectorXd column = latent_.col(col);
  if (second_.kernel.family == KernelFamily::SquaredExponential) {
    // Exponent contributions of the other columns stay fixed during this update.
    other = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index q = 0; q < latent_.cols(); ++q) {
      if (q == col) continue;
      const double l2 = second_.kernel.lengthscales[q] * second_.kernel.lengthscales[q];
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) {
          const double d = latent_(i, q) - latent_(j, q);
          other(i, j) += d * d / l2;
        }
    }
    const double l2p = second_.kernel.lengthscales[col] * second_.kernel.lengthscales[col];
    auto entry = [&, l2p](Eigen::Index i, Eigen::Index j) {  // i > j
      const double d = column[i] - column[j];
      const double e = other(i, j) + d * d / l2p;
      return std::exp(-e) + (e == 0.0 ? second_.nugget : 0.0);
    };
    // Pairs between two fixed rows never change; only rows touching a free cell are rebuilt.
    base = Eigen::MatrixXd(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      base(j, j) = 1.0 + second_.nugget;
      for (Eigen::Index i = j + 1; i < n; ++i) base(i, j) = base(j, i) = entry(i, j);
    }
    loglik = [&, entry](const Eigen::VectorXd& f) {
      for (std::size_t k = 0; k < prior.free_rows.size(); ++k) column[prior.free_rows[k]] = f[static_cast<Eigen::Index>(k)];
      Eigen::MatrixXd R = base;
      for (Eigen::Index a : prior.free_rows)
        for (Eigen::Index b = 0; b < n; ++b) {
          if (b == a) continue;
          R(a, b) = R(b, a) = a > b ? entry(a, b) : entry(b, a);
        }
      ++evaluations_;
      return gaussian_loglik_from_corr(R, data_.y, second_.scale);
    };
  } else {
    loglik = [&](const Eigen::VectorXd& f) {
      Eigen::MatrixXd W = latent_;
      for (std::size_t k = 0; k < prior.free_rows.size(); ++k)
        W(prior.free_rows[k], col) = f[static_cast<Eigen::Index>(k)];
      ++evaluations_;
      return output_loglik(W);
    };
  }

  EssState state;
  state.point.resize(static_cast<Eigen::Index>(prior.free_rows.size()));
  for (std::size_t k = 0; k < prior.free_rows.size(); ++k)
    state.point[static_cast<Eigen::Index>(k)] = latent_(prior.free_rows[k], col);
  state.loglik = loglik(state.point);
  if (!std::isfinite(state.loglik))
    throw ContractViolation("LatentSampler: current latent state has non-finite likelihood");
  ess_step(prior.mean, prior.factor, state, loglik, rng);
  for (std::size_t k = 0; k < prior.free_rows.size(); ++k)
    latent_(prior.free_rows[k], col) = state.point[static_cast<Eigen::Index>(k)];
}

void LatentSampler::sweep(Rng& rng, bool random_order) {
  std::vector<std::size_t> order(static_cast<std::size_t>(latent_.cols()));
  for (std::size_t p = 0; p < order.size(); ++p) order[p] = p;
  if (random_order) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  }
  for (std::size_t p : order) update_column(p, rng);
}

LayerImputation impute_latents(LatentSampler& sampler, Rng& rng, int draw_index) {
  sampler.sweep(rng);
  return {sampler.values(), sampler.observed(), draw_index};
}

// ---------------------------------------------------------------------------
// Emulator

DGPSIEmulator::DGPSIEmulator(LayerArchitecture arch, SemData data, std::vector<GPHyperparams> hyper,
                             std::vector<LayerImputation> imputations, SEMConfig config)
    : arch_(std::move(arch)), data_(std::move(data)), hyper_(std::move(hyper)),
      imputations_(std::move(imputations)), config_(std::move(config)) {
  arch_.validate();
  check_data(data_, arch_);
  const std::size_t P = arch_.latent_count();
  if (hyper_.size() != P + 1)
    throw ContractViolation("DGPSIEmulator: need hyperparameters for every node");
  if (imputations_.empty()) throw ContractViolation("DGPSIEmulator: at least one imputation required");
  for (const auto& imp : imputations_) {
    if (imp.values.rows() != data_.latent.rows() || imp.values.cols() != data_.latent.cols())
      throw ContractViolation("DGPSIEmulator: imputation has the wrong shape");
    for (Eigen::Index p = 0; p < imp.values.cols(); ++p)
      for (Eigen::Index i = 0; i < imp.values.rows(); ++i)
        if (data_.observed(i, p) && imp.values(i, p) != data_.latent(i, p))
          throw ContractViolation("DGPSIEmulator: imputation altered an observed latent cell");
  }

  std::vector<std::optional<LinkedEmulator>> built(imputations_.size());
  detail::parallel_for(imputations_.size(), detail::resolve_threads(config_.threads), [&](std::size_t i) {
    const Eigen::MatrixXd& W = imputations_[i].values;
    std::vector<FittedGP> first;
    for (std::size_t p = 0; p < P; ++p)
      first.emplace_back(TrainingSet{data_.X, W.col(static_cast<Eigen::Index>(p))}, hyper_[p]);
    FittedGP second(TrainingSet{W, data_.y}, hyper_[P]);
    built[i].emplace(arch_, std::move(first), std::move(second));
  });
  for (auto& b : built) linked_.push_back(std::move(*b));
}

FitConfig sem_node_fit_config(const SEMConfig& config, const LayerArchitecture& arch, std::size_t node) {
  FitConfig c = config.fit;
  c.family = node < arch.latent_count() ? arch.latent_nodes[node].family : arch.output_node.family;
  c.seed = derive_seed(config.seed, "sem.node", node);
  return c;
}

DGPSIEmulator train_sem(const SemData& data, const LayerArchitecture& arch, const SEMConfig& config) {
  arch.validate();
  config.validate();
  check_data(data, arch);
  const std::size_t P = arch.latent_count();
  const Eigen::Index n = data.X.rows();
  if (n < 2) throw ContractViolation("train_sem: need at least two training rows");

  auto node_name = [&](std::size_t node) {
    return node < P ? arch.latent_nodes[node].name : arch.output_node.name;
  };

  // Initial fits: each latent on its observed cells, then the output node on
  // the latent layer filled with first-layer posterior means.
  SemData work = data;
  std::vector<GPHyperparams> first;
  for (std::size_t p = 0; p < P; ++p) {
    const auto col = static_cast<Eigen::Index>(p);
    std::vector<Eigen::Index> obs;
    for (Eigen::Index i = 0; i < n; ++i)
      if (data.observed(i, col)) obs.push_back(i);
    if (obs.size() < 2)
      throw SemError("train_sem: latent '" + node_name(p) + "' has fewer than two observed cells", 0,
                     node_name(p));
    Eigen::VectorXd w(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k) w[static_cast<Eigen::Index>(k)] = data.latent(obs[k], col);
    try {
      const FittedGP gp = fit_gp(rows_of(data.X, obs), w, sem_node_fit_config(config, arch, p));
      for (Eigen::Index i = 0; i < n; ++i)
        if (!data.observed(i, col)) work.latent(i, col) = gp.predict(data.X.row(i).transpose()).mean;
      first.push_back(gp.hyper());
    } catch (const Error& e) {
      throw SemError(std::string("train_sem: initial fit failed: ") + e.what(), 0, node_name(p));
    }
  }
  GPHyperparams second;
  try {
    second = fit_gp(work.latent, data.y, sem_node_fit_config(config, arch, P)).hyper();
  } catch (const Error& e) {
    throw SemError(std::string("train_sem: initial fit failed: ") + e.what(), 0, node_name(P));
  }

  LatentSampler sampler(work, first, second);
  SemDiagnostics diag;
  diag.free_cells = sampler.free_cells();

  std::vector<GPHyperparams> final_hyper = first;
  final_hyper.push_back(second);

  if (diag.free_cells > 0) {
    Rng rng(derive_seed(config.seed, "sem.chain"));
    std::vector<std::vector<GPHyperparams>> kept(P + 1);
    std::vector<FitConfig> node_cfg;
    for (std::size_t node = 0; node <= P; ++node) node_cfg.push_back(sem_node_fit_config(config, arch, node));

    for (int it = 0; it < config.iterations; ++it) {
      try {
        for (int k = 0; k < config.ess_sweeps; ++k) sampler.sweep(rng, config.random_sweep_order);
      } catch (const EssStall& e) {
        throw SemError(std::string("train_sem: ") + e.what(), static_cast<std::size_t>(it), "latent layer");
      }
      const Eigen::MatrixXd& W = sampler.values();
      diag.output_loglik_trace.push_back(sampler.output_loglik(W));
      for (std::size_t node = 0; node <= P; ++node) {
        try {
          if (node < P) {
            first[node] = refit_gp(data.X, W.col(static_cast<Eigen::Index>(node)), first[node],
                                   node_cfg[node], config.mstep_iterations)
                              .hyper();
          } else {
            second = refit_gp(W, data.y, second, node_cfg[node], config.mstep_iterations).hyper();
          }
        } catch (const Error& e) {
          throw SemError(std::string("train_sem: refit failed: ") + e.what(), static_cast<std::size_t>(it),
                         node_name(node));
        }
      }
      sampler.set_hyperparams(first, second);
      if (it >= config.burn_in) {
        for (std::size_t p = 0; p < P; ++p) kept[p].push_back(first[p]);
        kept[P].push_back(second);
      }
      diag.iterations_run = it + 1;
    }

    final_hyper.clear();
    for (std::size_t node = 0; node <= P; ++node) {
      if (kept[node].empty())
        final_hyper.push_back(node < P ? first[node] : second);
      else
        final_hyper.push_back(geometric_mean(kept[node], node_cfg[node].estimate_nugget));
    }
    sampler.set_hyperparams(std::vector<GPHyperparams>(final_hyper.begin(), final_hyper.begin() + static_cast<std::ptrdiff_t>(P)),
                            final_hyper[P]);
  }

  std::vector<LayerImputation> imputations(static_cast<std::size_t>(config.imputations));
  if (diag.free_cells == 0) {
    for (int i = 0; i < config.imputations; ++i) imputations[static_cast<std::size_t>(i)] = {data.latent, data.observed, i};
  } else {
    std::vector<long> evals(imputations.size(), 0);
    detail::parallel_for(imputations.size(), detail::resolve_threads(config.threads), [&](std::size_t i) {
      LatentSampler chain = sampler;
      Rng r(derive_seed(config.seed, "sem.imputation", i));
      for (int s = 0; s < config.imputation_sweeps; ++s) chain.sweep(r, config.random_sweep_order);
      imputations[i] = {chain.values(), data.observed, static_cast<int>(i)};
      evals[i] = chain.likelihood_evaluations() - sampler.likelihood_evaluations();
    });
    diag.likelihood_evaluations = sampler.likelihood_evaluations();
    for (long e : evals) diag.likelihood_evaluations += e;
  }

  // Observed cells are carried through unchanged; restore them bitwise.
  for (auto& imp : imputations)
    for (Eigen::Index p = 0; p < imp.values.cols(); ++p)
      for (Eigen::Index i = 0; i < n; ++i)
        if (data.observed(i, p)) imp.values(i, p) = data.latent(i, p);

  DGPSIEmulator em(arch, data, std::move(final_hyper), std::move(imputations), config);
  em.diagnostics = std::move(diag);
  return em;
}

SemData sem_data_from_table(const ObservationTable& table, const LayerArchitecture& arch) {
  const Eigen::Index out = table.column_index(arch.output_node.name);
  std::vector<Eigen::Index> cols;
  for (const auto& node : arch.latent_nodes) cols.push_back(table.column_index(node.name));
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    if (table.observed(i, out)) rows.push_back(i);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto P = static_cast<Eigen::Index>(cols.size());
  SemData d;
  d.X.resize(n, 1);
  d.y.resize(n);
  d.latent = Eigen::MatrixXd::Zero(n, P);
  d.observed.resize(n, P);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    d.X(k, 0) = table.times[i];
    d.y[k] = table.values(i, out);
    for (Eigen::Index p = 0; p < P; ++p) {
      const Eigen::Index c = cols[static_cast<std::size_t>(p)];
      d.observed(k, p) = table.observed(i, c);
      d.latent(k, p) = table.observed(i, c) ? table.values(i, c) : 0.0;
    }
  }
  return d;
}

DGPSIEmulator train_sem(const ObservationTable& table, const LayerArchitecture& arch,
                        const SEMConfig& config) {
  return train_sem(sem_data_from_table(table, arch), arch, config);
}

EnsemblePrediction predict_ensemble(const DGPSIEmulator& em, const Eigen::Ref<const Eigen::VectorXd>& x0) {
  EnsemblePrediction out;
  out.components.reserve(em.linked().size());
  for (const auto& lgp : em.linked()) out.components.push_back(link_predict(lgp, x0, &em.clamp_stats));
  out.mixture = mix_components(out.components);
  return out;
}

std::vector<EnsemblePrediction> impute_covariates(const DGPSIEmulator& em, const Eigen::MatrixXd& query,
                                                  const std::string& target) {
  const std::size_t p = em.architecture().latent_index(target);
  if (query.cols() != em.architecture().input_dims)
    throw ContractViolation("impute_covariates: query dimension mismatch");
  std::vector<EnsemblePrediction> out;
  out.reserve(static_cast<std::size_t>(query.rows()));
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    EnsemblePrediction e;
    e.components.reserve(em.linked().size());
    for (const auto& lgp : em.linked()) e.components.push_back(lgp.first_layer()[p].predict(query.row(q).transpose()));
    e.mixture = mix_components(e.components);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialisation

nlohmann::json fit_config_to_json(const FitConfig& c) {
  return {{"kernel", std::string(to_string(c.family))},
          {"lengthscale_lower", c.lengthscale_lower},
          {"lengthscale_upper", c.lengthscale_upper},
          {"init_lower", c.init_lower},
          {"init_upper", c.init_upper},
          {"estimate_nugget", c.estimate_nugget},
          {"nugget", c.nugget},
          {"nugget_lower", c.nugget_lower},
          {"nugget_upper", c.nugget_upper},
          {"starts", c.starts},
          {"max_iterations", c.max_iterations},
          {"seed", c.seed}};
}

FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig c) {
  if (j.contains("kernel")) c.family = kernel_family_from_string(j.at("kernel").get<std::string>());
  c.lengthscale_lower = j.value("lengthscale_lower", c.lengthscale_lower);
  c.lengthscale_upper = j.value("lengthscale_upper", c.lengthscale_upper);
  c.init_lower = j.value("init_lower", c.init_lower);
  c.init_upper = j.value("init_upper", c.init_upper);
  c.estimate_nugget = j.value("estimate_nugget", c.estimate_nugget);
  c.nugget = j.value("nugget", c.nugget);
  c.nugget_lower = j.value("nugget_lower", c.nugget_lower);
  c.nugget_upper = j.value("nugget_upper", c.nugget_upper);
  c.starts = j.value("starts", c.starts);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json sem_config_to_json(const SEMConfig& c) {
  return {{"iterations", c.iterations},
          {"burn_in", c.burn_in},
          {"ess_sweeps", c.ess_sweeps},
          {"imputations", c.imputations},
          {"imputation_sweeps", c.imputation_sweeps},
          {"mstep_iterations", c.mstep_iterations},
          {"random_sweep_order", c.random_sweep_order},
          {"threads", c.threads},
          {"seed", c.seed},
          {"fit", fit_config_to_json(c.fit)}};
}

SEMConfig sem_config_from_json(const nlohmann::json& j, SEMConfig c) {
  c.iterations = j.value("iterations", c.iterations);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.ess_sweeps = j.value("ess_sweeps", c.ess_sweeps);
  c.imputations = j.value("imputations", c.imputations);
  c.imputation_sweeps = j.value("imputation_sweeps", c.imputation_sweeps);
  c.mstep_iterations = j.value("mstep_iterations", c.mstep_iterations);
  c.random_sweep_order = j.value("random_sweep_order", c.random_sweep_order);
  c.threads = j.value("threads", c.threads);
  c.seed = j.value("seed", c.seed);
  if (j.contains("fit")) c.fit = fit_config_from_json(j.at("fit"), c.fit);
  c.validate();
  return c;
}

nlohmann::json dgp_manifest(const DGPSIEmulator& em) {
  const auto& arch = em.architecture();
  const std::size_t P = arch.latent_count();
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t node = 0; node <= P; ++node) {
    double jitter = 0.0;
    for (const auto& lgp : em.linked()) {
      const FittedGP& gp = node < P ? lgp.first_layer()[node] : lgp.second_layer();
      jitter = std::max(jitter, gp.corr().jitter_applied());
    }
    nodes.push_back({{"node", node < P ? arch.latent_nodes[node].name : arch.output_node.name},
                     {"layer", node < P ? 1 : 2},
                     {"hyperparams", hyperparams_to_json(em.hyperparams()[node])},
                     {"max_jitter", jitter}});
  }
  std::vector<Eigen::Index> observed_counts;
  for (Eigen::Index p = 0; p < em.data().observed.cols(); ++p)
    observed_counts.push_back(em.data().observed.col(p).count());
  const auto& d = em.diagnostics;
  return {{"format", "dgpsi-emulator/1"},
          {"architecture", architecture_to_json(arch)},
          {"config", sem_config_to_json(em.config())},
          {"seed", em.config().seed},
          {"training_size", em.data().X.rows()},
          {"latent_observed_counts", observed_counts},
          {"imputations", em.size()},
          {"nodes", nodes},
          {"diagnostics",
           {{"free_cells", d.free_cells},
            {"likelihood_evaluations", d.likelihood_evaluations},
            {"iterations_run", d.iterations_run},
            {"output_loglik_trace", d.output_loglik_trace}}},
          {"clamp", {{"predictions", em.clamp_stats.predictions}, {"clamped", em.clamp_stats.clamped}}}};
}

void save_emulator(const DGPSIEmulator& em, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& arch = em.architecture();
  const auto& d = em.data();
  {
    std::ofstream out(dir / "data.csv");
    for (Eigen::Index k = 0; k < d.X.cols(); ++k) out << "x" << k << ",";
    out << arch.output_node.name;
    for (const auto& node : arch.latent_nodes) out << "," << node.name;
    out << "\n";
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
      for (Eigen::Index k = 0; k < d.X.cols(); ++k) out << detail::format_double(d.X(i, k)) << ",";
      out << detail::format_double(d.y[i]);
      for (Eigen::Index p = 0; p < d.latent.cols(); ++p)
        out << "," << (d.observed(i, p) ? detail::format_double(d.latent(i, p)) : std::string());
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "imputations.csv");
    out << "draw,row";
    for (const auto& node : arch.latent_nodes) out << "," << node.name;
    out << "\n";
    for (const auto& imp : em.imputations())
      for (Eigen::Index i = 0; i < imp.values.rows(); ++i) {
        out << imp.draw_index << "," << i;
        for (Eigen::Index p = 0; p < imp.values.cols(); ++p) out << "," << detail::format_double(imp.values(i, p));
        out << "\n";
      }
  }
  nlohmann::json m = dgp_manifest(em);
  m["payload"] = {{"data", "data.csv"}, {"imputations", "imputations.csv"}};
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line != "\r") rows.push_back(detail::split_csv_line(line));
  return rows;
}

double to_double(const std::string& s, std::size_t line) {
  double v;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "'", line);
  return v;
}

}  // namespace

DGPSIEmulator load_emulator(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw Error("cannot open '" + (dir / "manifest.json").string() + "'");
  const nlohmann::json m = nlohmann::json::parse(min);
  if (m.value("format", std::string()) != "dgpsi-emulator/1") throw SchemaError("unrecognised emulator manifest");
  const LayerArchitecture arch = architecture_from_json(m.at("architecture"));
  const SEMConfig config = sem_config_from_json(m.at("config"));
  const std::size_t P = arch.latent_count();
  std::vector<GPHyperparams> hyper;
  for (const auto& node : m.at("nodes")) hyper.push_back(hyperparams_from_json(node.at("hyperparams")));

  const auto& payload = m.at("payload");
  const auto data_rows = read_csv_rows(dir / payload.at("data").get<std::string>());
  if (data_rows.size() < 2) throw SchemaError("emulator data.csv has no rows");
  const auto D = arch.input_dims;
  const auto n = static_cast<Eigen::Index>(data_rows.size() - 1);
  SemData d;
  d.X.resize(n, D);
  d.y.resize(n);
  d.latent = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(P));
  d.observed = BoolMatrix::Constant(n, static_cast<Eigen::Index>(P), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = data_rows[static_cast<std::size_t>(i + 1)];
    if (r.size() != static_cast<std::size_t>(D) + 1 + P) throw ParseError("wrong field count", static_cast<std::size_t>(i + 2));
    for (Eigen::Index k = 0; k < D; ++k) d.X(i, k) = to_double(r[static_cast<std::size_t>(k)], static_cast<std::size_t>(i + 2));
    d.y[i] = to_double(r[static_cast<std::size_t>(D)], static_cast<std::size_t>(i + 2));
    for (std::size_t p = 0; p < P; ++p) {
      const auto& f = r[static_cast<std::size_t>(D) + 1 + p];
      if (!f.empty()) {
        d.latent(i, static_cast<Eigen::Index>(p)) = to_double(f, static_cast<std::size_t>(i + 2));
        d.observed(i, static_cast<Eigen::Index>(p)) = true;
      }
    }
  }

  const auto imp_rows = read_csv_rows(dir / payload.at("imputations").get<std::string>());
  std::vector<LayerImputation> imps;
  for (std::size_t k = 1; k < imp_rows.size(); ++k) {
    const auto& r = imp_rows[k];
    if (r.size() != 2 + P) throw ParseError("wrong field count", k + 1);
    const int draw = static_cast<int>(to_double(r[0], k + 1));
    const auto row = static_cast<Eigen::Index>(to_double(r[1], k + 1));
    if (imps.empty() || imps.back().draw_index != draw)
      imps.push_back({Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(P)), d.observed, draw});
    if (row < 0 || row >= n) throw ParseError("row index out of range", k + 1);
    for (std::size_t p = 0; p < P; ++p) imps.back().values(row, static_cast<Eigen::Index>(p)) = to_double(r[2 + p], k + 1);
  }

  DGPSIEmulator em(arch, std::move(d), std::move(hyper), std::move(imps), config);
  const auto& diag = m.at("diagnostics");
  em.diagnostics.free_cells = diag.value("free_cells", std::size_t{0});
  em.diagnostics.likelihood_evaluations = diag.value("likelihood_evaluations", 0L);
  em.diagnostics.iterations_run = diag.value("iterations_run", 0);
  em.diagnostics.output_loglik_trace = diag.value("output_loglik_trace", std::vector<double>{});
  return em;
}

}  // namespace dgpsi
