#include "dgpsi/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "dgpsi/errors.hpp"
#include "dgpsi/random.hpp"
#include "optimize.hpp"

namespace dgpsi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSqrt5 = 2.23606797749978969640917;
constexpr double kClampTolerance = -1e-10;

void check_training(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ContractViolation("X and y have different row counts");
  if (X.rows() < 1 || X.cols() < 1) throw ContractViolation("empty training set");
  if (!X.allFinite() || !y.allFinite()) throw ContractViolation("training data must be finite");
}

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

Bounds make_bounds(const Eigen::VectorXd& ranges, const FitConfig& c) {
  const Eigen::Index d = ranges.size();
  const Eigen::Index n = d + (c.estimate_nugget ? 1 : 0);
  Bounds b{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < d; ++i) {
    b.lower[i] = std::log(c.lengthscale_lower * ranges[i]);
    b.upper[i] = std::log(c.lengthscale_upper * ranges[i]);
  }
  if (c.estimate_nugget) {
    b.lower[d] = std::log(c.nugget_lower);
    b.upper[d] = std::log(c.nugget_upper);
  }
  return b;
}

GPHyperparams from_theta(const Eigen::VectorXd& theta, Eigen::Index dims, const FitConfig& c,
                         double scale) {
  GPHyperparams h;
  h.kernel.family = c.family;
  h.kernel.lengthscales = theta.head(dims).array().exp();
  h.nugget = c.estimate_nugget ? std::exp(theta[dims]) : c.nugget;
  h.scale = scale;
  return h;
}

FittedGP finish_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitConfig& config,
                    const Eigen::VectorXd& theta, FitDiagnostics diag) {
  std::optional<double> fixed;
  if (!config.estimate_nugget) fixed = config.nugget;
  double scale = 0.0;
  detail::profiled_nll(X, y, config.family, theta, fixed, nullptr, &scale);
  GPHyperparams h = from_theta(theta, X.cols(), config, scale);
  diag.log_likelihood = log_marginal_likelihood(X, y, h);
  return FittedGP(TrainingSet{X, y}, std::move(h), diag);
}

void check_fit_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitConfig& config) {
  check_training(X, y);
  config.validate();
  if (X.rows() < 2) throw ContractViolation("fit_gp needs at least two training points");
  if ((y.array() == y[0]).all())
    throw DegenerateDataError("fit_gp: all outputs are identical; nothing to fit");
}

}  // namespace

void FitConfig::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(lengthscale_lower) || !positive(lengthscale_upper) ||
      lengthscale_lower >= lengthscale_upper)
    throw ContractViolation("FitConfig: invalid lengthscale bounds");
  if (!positive(init_lower) || !positive(init_upper) || init_lower > init_upper)
    throw ContractViolation("FitConfig: invalid lengthscale start range");
  if (estimate_nugget) {
    if (!positive(nugget_lower) || !positive(nugget_upper) || nugget_lower >= nugget_upper)
      throw ContractViolation("FitConfig: invalid nugget bounds");
  } else if (!(nugget >= 0.0) || !std::isfinite(nugget)) {
    throw ContractViolation("FitConfig: fixed nugget must be non-negative");
  }
  if (starts < 1) throw ContractViolation("FitConfig: starts must be >= 1");
  if (max_iterations < 1) throw ContractViolation("FitConfig: max_iterations must be >= 1");
}

FittedGP::FittedGP(TrainingSet training, GPHyperparams hyper, FitDiagnostics diagnostics)
    : training_(std::move(training)),
      hyper_(std::move(hyper)),
      corr_(build_correlation(hyper_.kernel, hyper_.nugget, training_.X)),
      diagnostics_(diagnostics) {
  check_training(training_.X, training_.y);
  hyper_.validate();
  alpha_ = corr_.solve(training_.y);
}

PredictiveGaussian FittedGP::predict(const Eigen::Ref<const Eigen::VectorXd>& x0) const {
  if (!x0.allFinite()) throw ContractViolation("predict: query point must be finite");
  const Eigen::VectorXd r = kernel_row(hyper_.kernel, training_.X, x0);
  PredictiveGaussian out;
  out.mean = r.dot(alpha_);
  const Eigen::VectorXd z = corr_.factor().triangularView<Eigen::Lower>().solve(r);
  double v = hyper_.scale * (1.0 + hyper_.nugget - z.squaredNorm());
  if (v < 0.0) {
    out.clamped = v < kClampTolerance;
    v = 0.0;
  }
  out.variance = v;
  return out;
}

PredictiveGaussian predict(const FittedGP& model, const Eigen::Ref<const Eigen::VectorXd>& x0) {
  return model.predict(x0);
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const GPHyperparams& hyper) {
  check_training(X, y);
  hyper.validate();
  const CorrelationMatrix R = build_correlation(hyper.kernel, hyper.nugget, X);
  const Eigen::VectorXd z = R.factor().triangularView<Eigen::Lower>().solve(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * (z.squaredNorm() / hyper.scale + R.log_determinant() +
                 n * std::log(hyper.scale) + n * kLog2Pi);
}

namespace detail {

Eigen::VectorXd input_ranges(const Eigen::MatrixXd& X) {
  Eigen::VectorXd r = X.colwise().maxCoeff() - X.colwise().minCoeff();
  for (Eigen::Index d = 0; d < r.size(); ++d)
    if (!(r[d] > 0.0)) r[d] = 1.0;
  return r;
}

double profiled_nll(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelFamily family,
                    const Eigen::VectorXd& theta, std::optional<double> nugget,
                    Eigen::VectorXd* grad, double* profiled_scale) {
  const Eigen::Index n = X.rows();
  const Eigen::Index dims = X.cols();
  const bool has_nugget_param = !nugget.has_value();
  if (theta.size() != dims + (has_nugget_param ? 1 : 0))
    throw ContractViolation("profiled_nll: parameter vector has the wrong length");

  const Eigen::VectorXd ls = theta.head(dims).array().exp();
  const double eta = has_nugget_param ? std::exp(theta[dims]) : *nugget;

  // Plain kernel K and, for the gradient, per-dimension log-lengthscale derivatives.
  Eigen::MatrixXd K(n, n);
  std::vector<Eigen::MatrixXd> dK;
  if (grad) dK.assign(static_cast<std::size_t>(dims), Eigen::MatrixXd::Zero(n, n));
  Eigen::MatrixXd dup = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double k = 1.0;
      bool same = true;
      for (Eigen::Index d = 0; d < dims; ++d) {
        const double r = std::abs(X(i, d) - X(j, d));
        if (r != 0.0) same = false;
        k *= kernel_1d(family, ls[d], r);
      }
      K(i, j) = K(j, i) = k;
      if (same) dup(i, j) = dup(j, i) = 1.0;
      if (grad) {
        for (Eigen::Index d = 0; d < dims; ++d) {
          const double r = std::abs(X(i, d) - X(j, d));
          double dk;
          if (family == KernelFamily::SquaredExponential) {
            const double u = r / ls[d];
            dk = k * 2.0 * u * u;
          } else {
            const double s = kSqrt5 * r / ls[d];
            const double kd = (1.0 + s + s * s / 3.0) * std::exp(-s);
            const double dkd = (s * s / 3.0) * (1.0 + s) * std::exp(-s);
            dk = kd > 0.0 ? k / kd * dkd : 0.0;
          }
          dK[static_cast<std::size_t>(d)](i, j) = dK[static_cast<std::size_t>(d)](j, i) = dk;
        }
      }
    }
  }
  Eigen::MatrixXd R = K + eta * dup;
  const CorrelationMatrix corr(std::move(R));
  const Eigen::VectorXd alpha = corr.solve(y);
  const double quad = y.dot(alpha);
  if (!(quad > 0.0) || !std::isfinite(quad))
    throw DegenerateDataError("profiled_nll: y^T R^-1 y is not positive");
  const double scale = quad / static_cast<double>(n);
  if (profiled_scale) *profiled_scale = scale;
  const double nd = static_cast<double>(n);
  const double value =
      0.5 * nd * std::log(scale) + 0.5 * corr.log_determinant() + 0.5 * nd * (1.0 + kLog2Pi);

  if (grad) {
    const Eigen::MatrixXd Rinv = corr.inverse();
    grad->resize(theta.size());
    for (Eigen::Index d = 0; d < dims; ++d) {
      const Eigen::MatrixXd& D = dK[static_cast<std::size_t>(d)];
      const double a = alpha.dot(D * alpha);
      const double tr = Rinv.cwiseProduct(D).sum();
      (*grad)[d] = -0.5 * nd * a / quad + 0.5 * tr;
    }
    if (has_nugget_param) {
      const Eigen::MatrixXd D = eta * dup;
      const double a = alpha.dot(D * alpha);
      const double tr = Rinv.cwiseProduct(D).sum();
      (*grad)[dims] = -0.5 * nd * a / quad + 0.5 * tr;
    }
  }
  return value;
}

}  // namespace detail

namespace {

detail::BoxBfgsResult run_local(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const FitConfig& config, const Bounds& bounds,
                                const Eigen::VectorXd& start, int max_iterations) {
  std::optional<double> fixed;
  if (!config.estimate_nugget) fixed = config.nugget;
  detail::Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
    return detail::profiled_nll(X, y, config.family, theta, fixed, &g);
  };
  detail::BoxBfgsOptions opts;
  opts.max_iterations = max_iterations;
  return detail::minimize_box_bfgs(objective, start, bounds.lower, bounds.upper, opts);
}

}  // namespace

FittedGP fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitConfig& config) {
  check_fit_inputs(X, y, config);
  const Eigen::VectorXd ranges = detail::input_ranges(X);
  const Bounds bounds = make_bounds(ranges, config);
  const Eigen::Index dims = X.cols();

  Rng rng(derive_seed(config.seed, "fit_gp.starts"));
  std::vector<Eigen::VectorXd> starts;
  for (int s = 0; s < config.starts; ++s) {
    Eigen::VectorXd theta(bounds.lower.size());
    for (Eigen::Index d = 0; d < dims; ++d)
      theta[d] = std::log(ranges[d]) +
                 rng.uniform(std::log(config.init_lower), std::log(config.init_upper));
    if (config.estimate_nugget)
      theta[dims] = rng.uniform(std::log(1e-4), std::log(1e-1));
    starts.push_back(theta.cwiseMax(bounds.lower).cwiseMin(bounds.upper));
  }

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  FitDiagnostics diag;
  for (int s = 0; s < config.starts; ++s) {
    const auto res = run_local(X, y, config, bounds, starts[static_cast<std::size_t>(s)],
                               config.max_iterations);
    diag.evaluations += res.evaluations;
    if (std::isfinite(res.value) && res.value < best) {
      best = res.value;
      best_theta = res.x;
      diag.best_start = s;
      diag.iterations = res.iterations;
      diag.converged = res.converged;
    }
  }
  if (!std::isfinite(best)) {
    throw FitFailure("fit_gp: no start produced a finite likelihood", {},
                     std::numeric_limits<double>::infinity());
  }
  return finish_fit(X, y, config, best_theta, diag);
}

FittedGP refit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPHyperparams& start,
                  const FitConfig& config, int max_iterations) {
  check_fit_inputs(X, y, config);
  const Bounds bounds = make_bounds(detail::input_ranges(X), config);
  const Eigen::Index dims = X.cols();
  if (start.kernel.dims() != dims) throw ContractViolation("refit_gp: start has wrong dimension");
  Eigen::VectorXd theta(bounds.lower.size());
  theta.head(dims) = start.kernel.lengthscales.array().log();
  if (config.estimate_nugget) theta[dims] = std::log(std::max(start.nugget, config.nugget_lower));
  theta = theta.cwiseMax(bounds.lower).cwiseMin(bounds.upper);

  const auto res = run_local(X, y, config, bounds, theta, max_iterations);
  if (!std::isfinite(res.value)) {
    std::vector<double> best(theta.data(), theta.data() + theta.size());
    throw FitFailure("refit_gp: objective is not finite at the warm start", std::move(best),
                     res.value);
  }
  FitDiagnostics diag;
  diag.evaluations = res.evaluations;
  diag.iterations = res.iterations;
  diag.converged = res.converged;
  return finish_fit(X, y, config, res.x, diag);
}

}  // namespace dgpsi
