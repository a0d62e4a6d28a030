#include "optimize.hpp"

#include <cmath>
#include <limits>

#include "dgpsi/errors.hpp"

namespace dgpsi::detail {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  try {
    const double v = f(x, g);
    if (!std::isfinite(v) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    return v;
  } catch (const dgpsi::Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Variables sitting on a bound with the gradient pushing outward are frozen.
Eigen::VectorXd free_mask(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                          const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) m[i] = 0.0;
  }
  return m;
}

}  // namespace

BoxBfgsResult minimize_box_bfgs(const Objective& f, Eigen::VectorXd x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const BoxBfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BoxBfgsResult out;
  Eigen::VectorXd x = clamp(x0, lower, upper);
  Eigen::VectorXd g(n);
  double fx = safe_eval(f, x, g);
  ++out.evaluations;
  out.x = x;
  out.value = fx;
  if (!std::isfinite(fx)) return out;

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g_new(n);
  int small_changes = 0;

  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::VectorXd mask = free_mask(x, g, lower, upper);
    const Eigen::VectorXd pg = g.cwiseProduct(mask);
    if (pg.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd d = -(H * pg);
    d = d.cwiseProduct(mask);
    if (g.dot(d) >= 0.0) {
      H.setIdentity();
      d = -pg;
    }
    const double dn = d.lpNorm<Eigen::Infinity>();
    double t = dn > options.max_step ? options.max_step / dn : 1.0;

    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = clamp(x + t * d, lower, upper);
      f_new = safe_eval(f, x_new, g_new);
      ++out.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (H.isIdentity()) break;
      H.setIdentity();
      continue;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm() && sy > 0.0) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }

    const double change = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    if (change <= options.function_tolerance * (1.0 + std::abs(fx))) {
      if (++small_changes >= 2) {
        out.converged = true;
        break;
      }
    } else {
      small_changes = 0;
    }
  }
  out.x = x;
  out.value = fx;
  return out;
}

}  // namespace dgpsi::detail
