#pragma once

#include <Eigen/Core>

#include <functional>

namespace dgpsi::detail {

/// Objective returning f(x) and writing the gradient into `grad`.
/// A non-finite return (or a thrown dgpsi::Error) marks x as infeasible.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct BoxBfgsOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;
  double function_tolerance = 1e-10;
  double max_step = 2.0;  // in parameter units, bounds the first trial step
};

struct BoxBfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Projected BFGS on the box [lower, upper]. Minimises.
BoxBfgsResult minimize_box_bfgs(const Objective& f, Eigen::VectorXd x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const BoxBfgsOptions& options);

}  // namespace dgpsi::detail
