#include "dgpsi/ess.hpp"

#include <cmath>
#include <numbers>

#include "dgpsi/errors.hpp"

namespace dgpsi {

namespace {
constexpr double kMinBracket = 1e-12;
}

void ess_step(const Eigen::VectorXd& prior_mean, const Eigen::MatrixXd& prior_factor,
              EssState& state, const LogLikelihood& loglik, Rng& rng) {
  const Eigen::Index n = state.point.size();
  if (n == 0) return;
  if (prior_mean.size() != n || prior_factor.rows() != n || prior_factor.cols() != n)
    throw ContractViolation("ess_step: prior and state dimensions differ");
  if (!std::isfinite(state.loglik))
    throw ContractViolation("ess_step: current log likelihood must be finite");

  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  const Eigen::VectorXd nu = prior_factor.triangularView<Eigen::Lower>() * z;
  const Eigen::VectorXd centred = state.point - prior_mean;

  const double threshold = state.loglik + std::log(1.0 - rng.uniform());
  double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double lo = theta - 2.0 * std::numbers::pi;
  double hi = theta;

  for (;;) {
    Eigen::VectorXd proposal = prior_mean + centred * std::cos(theta) + nu * std::sin(theta);
    const double ll = loglik(proposal);
    ++state.evaluations;
    if (std::isfinite(ll) && ll > threshold) {
      state.point = std::move(proposal);
      state.loglik = ll;
      return;
    }
    if (theta < 0.0)
      lo = theta;
    else
      hi = theta;
    if (hi - lo < kMinBracket) {
      throw EssStall("elliptical slice sampler bracket collapsed",
                     std::vector<double>(state.point.data(), state.point.data() + n));
    }
    theta = rng.uniform(lo, hi);
  }
}

Eigen::VectorXd ess_update(const Eigen::VectorXd& prior_mean, const Eigen::MatrixXd& prior_factor,
                           const Eigen::VectorXd& current, const LogLikelihood& loglik, Rng& rng) {
  if (current.size() == 0) return current;
  EssState state{current, loglik(current), 1};
  ess_step(prior_mean, prior_factor, state, loglik, rng);
  return state.point;
}

}  // namespace dgpsi
