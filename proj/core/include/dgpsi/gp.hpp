#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>

#include "dgpsi/kernel.hpp"

namespace dgpsi {

struct TrainingSet {
  Eigen::MatrixXd X;  // N x D
  Eigen::VectorXd y;  // N
};

struct PredictiveGaussian {
  double mean = 0.0;
  double variance = 0.0;
  bool clamped = false;  // variance was negative beyond -1e-10 and reset to 0
};

/// Settings for marginal-likelihood hyperparameter estimation.
///
/// Lengthscale bounds and random-start ranges are multiples of each input
/// dimension's range (max - min over the training rows). The scale is
/// profiled out analytically and never optimised directly.
struct FitConfig {
  KernelFamily family = KernelFamily::SquaredExponential;
  double lengthscale_lower = 1e-3;
  double lengthscale_upper = 1e2;
  double init_lower = 0.01;
  double init_upper = 10.0;
  bool estimate_nugget = true;
  double nugget = 1e-6;  // used as-is when estimate_nugget is false
  double nugget_lower = 1e-8;
  double nugget_upper = 10.0;
  int starts = 5;
  int max_iterations = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitDiagnostics {
  double log_likelihood = 0.0;
  int evaluations = 0;
  int iterations = 0;
  int best_start = 0;
  bool converged = false;
};

/// A zero-mean GP conditioned on training data under fixed hyperparameters.
class FittedGP {
 public:
  FittedGP(TrainingSet training, GPHyperparams hyper, FitDiagnostics diagnostics = {});

  const TrainingSet& training() const { return training_; }
  const GPHyperparams& hyper() const { return hyper_; }
  const CorrelationMatrix& corr() const { return corr_; }
  /// R^{-1} y
  const Eigen::VectorXd& alpha() const { return alpha_; }
  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  Eigen::Index size() const { return training_.y.size(); }
  Eigen::Index input_dims() const { return training_.X.cols(); }

  PredictiveGaussian predict(const Eigen::Ref<const Eigen::VectorXd>& x0) const;

 private:
  TrainingSet training_;
  GPHyperparams hyper_;
  CorrelationMatrix corr_;
  Eigen::VectorXd alpha_;
  FitDiagnostics diagnostics_;
};

/// Multi-start maximum-likelihood fit with sigma^2 profiled out.
FittedGP fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitConfig& config);

/// Single local optimisation started from `start` (warm start). The scale in
/// `start` is ignored and re-profiled. `max_iterations` overrides config.
FittedGP refit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPHyperparams& start,
                  const FitConfig& config, int max_iterations);

PredictiveGaussian predict(const FittedGP& model, const Eigen::Ref<const Eigen::VectorXd>& x0);

/// Zero-mean Gaussian log density of y under sigma^2 R(X).
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const GPHyperparams& hyper);

namespace detail {

/// Negative profiled log likelihood over theta = [log l_1..log l_D, (log eta)].
/// The log-nugget entry is present only when `nugget` is empty. Writes the
/// analytic gradient when `grad` is non-null and returns sigma-hat^2 through
/// `profiled_scale`.
double profiled_nll(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelFamily family,
                    const Eigen::VectorXd& theta, std::optional<double> nugget,
                    Eigen::VectorXd* grad, double* profiled_scale = nullptr);

/// Per-dimension input range used to scale lengthscale bounds (1 when flat).
Eigen::VectorXd input_ranges(const Eigen::MatrixXd& X);

}  // namespace detail

}  // namespace dgpsi
