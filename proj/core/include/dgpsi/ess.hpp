#pragma once

#include <Eigen/Core>

#include <functional>

#include "dgpsi/random.hpp"

namespace dgpsi {

using LogLikelihood = std::function<double(const Eigen::VectorXd&)>;

/// Chain position with its cached log likelihood.
struct EssState {
  Eigen::VectorXd point;
  double loglik = 0.0;
  long evaluations = 0;  // likelihood calls made by ess_step so far
};

/// One elliptical slice sampling transition targeting
/// Normal(prior_mean, L L^T) x exp(loglik). `prior_factor` is L.
/// Throws EssStall if the angle bracket shrinks below 1e-12 radians.
void ess_step(const Eigen::VectorXd& prior_mean, const Eigen::MatrixXd& prior_factor,
              EssState& state, const LogLikelihood& loglik, Rng& rng);

/// Convenience form returning the next point. A zero-length state is
/// returned unchanged without touching the likelihood or the generator.
Eigen::VectorXd ess_update(const Eigen::VectorXd& prior_mean, const Eigen::MatrixXd& prior_factor,
                           const Eigen::VectorXd& current, const LogLikelihood& loglik, Rng& rng);

}  // namespace dgpsi
