#pragma once

// Stationary product kernels and their Gaussian-input expectations.
//
// Squared-exponential convention used everywhere in this library:
//
//     k(r) = exp(-r^2 / l^2)
//
// (no factor of 2 in the denominator). The closed-form expectations below
// and the fitted lengthscales reported in manifests follow this convention.
// Matern-2.5 is
//
//     k(r) = (1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) exp(-sqrt(5) r / l)
//
// and is available for single-GP use only.

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

namespace dgpsi {

enum class KernelFamily { SquaredExponential, Matern25 };

std::string_view to_string(KernelFamily family);
KernelFamily kernel_family_from_string(std::string_view name);

struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  Eigen::VectorXd lengthscales;  // one per input dimension

  KernelSpec() = default;
  KernelSpec(KernelFamily f, Eigen::VectorXd ls);

  Eigen::Index dims() const { return lengthscales.size(); }
  /// Throws ContractViolation unless every lengthscale is positive and finite.
  void validate() const;
};

struct GPHyperparams {
  KernelSpec kernel;
  double scale = 1.0;   // sigma^2
  double nugget = 0.0;  // eta, relative to scale

  void validate() const;
};

/// One-dimensional correlation k_d(|r|) for a given lengthscale.
double kernel_1d(KernelFamily family, double lengthscale, double r);

/// Product kernel prod_d k_d(|a_d - b_d|).
double kernel_value(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b);

/// Kernel row r(x0) = [k(x0, X_1), ..., k(x0, X_N)] without nugget.
Eigen::VectorXd kernel_row(const KernelSpec& spec, const Eigen::MatrixXd& X,
                           const Eigen::Ref<const Eigen::VectorXd>& x0);

/// Plain kernel matrix between the rows of A and B (no nugget).
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B);

/// Symmetric correlation matrix R(X) with its Cholesky factor.
///
/// Entry (i, j) is k(X_i, X_j) + nugget * 1{X_i == X_j}. If the plain
/// factorization fails, jitter of 1e-10, 1e-9, ..., 1e-4 is added to the
/// diagonal until it succeeds; the amount is kept in jitter_applied().
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const { return values_; }
  /// Lower-triangular L with L L^T = values() + jitter_applied() * I.
  const Eigen::MatrixXd& factor() const { return factor_; }
  double jitter_applied() const { return jitter_; }
  Eigen::Index size() const { return values_.rows(); }

  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& b) const;
  Eigen::MatrixXd solve_matrix(const Eigen::MatrixXd& B) const;
  Eigen::MatrixXd inverse() const;
  double log_determinant() const;

 private:
  Eigen::MatrixXd values_;
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
};

CorrelationMatrix build_correlation(const KernelSpec& spec, double nugget,
                                    const Eigen::MatrixXd& X);

/// Lower-triangular Cholesky factor of a symmetric PSD matrix using the
/// same escalating jitter policy as CorrelationMatrix. `jitter` receives
/// the amount added.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& A, double* jitter = nullptr);

/// E[k(W, w)] for W ~ Normal(mean, variance). Squared-exponential only.
double expect_k(KernelFamily family, double lengthscale, double mean, double variance,
                double w);

/// E[k(W, wi) k(W, wj)] for W ~ Normal(mean, variance). Squared-exponential only.
double expect_kk(KernelFamily family, double lengthscale, double mean, double variance,
                 double wi, double wj);

}  // namespace dgpsi
