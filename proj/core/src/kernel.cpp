#include "dgpsi/kernel.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>

#include "dgpsi/errors.hpp"

namespace dgpsi {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917;
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

bool try_cholesky(const Eigen::MatrixXd& A, Eigen::MatrixXd& L) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  return L.allFinite();
}

// Lower-triangular inverse by 2x2 block recursion; the strict upper part is left as scratch.
void invert_lower(Eigen::Ref<Eigen::MatrixXd> T) {
  const Eigen::Index n = T.rows();
  if (n <= 16) {
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    T.triangularView<Eigen::Lower>().solveInPlace(I);
    T = I;
    return;
  }
  const Eigen::Index h = n / 2;
  auto A = T.topLeftCorner(h, h);
  auto B = T.bottomLeftCorner(n - h, h);
  auto C = T.bottomRightCorner(n - h, n - h);
  invert_lower(A);
  invert_lower(C);
  const Eigen::MatrixXd CB = -(C.triangularView<Eigen::Lower>() * B);
  B.noalias() = CB * A.triangularView<Eigen::Lower>();
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential:
      return "sexp";
    case KernelFamily::Matern25:
      return "matern2.5";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(std::string_view name) {
  if (name == "sexp" || name == "se" || name == "squared_exponential")
    return KernelFamily::SquaredExponential;
  if (name == "matern2.5" || name == "matern25") return KernelFamily::Matern25;
  throw ContractViolation("unknown kernel family '" + std::string(name) + "'");
}

KernelSpec::KernelSpec(KernelFamily f, Eigen::VectorXd ls)
    : family(f), lengthscales(std::move(ls)) {
  validate();
}

void KernelSpec::validate() const {
  if (lengthscales.size() == 0) throw ContractViolation("kernel has no input dimensions");
  for (Eigen::Index d = 0; d < lengthscales.size(); ++d) {
    const double l = lengthscales[d];
    if (!(l > 0.0) || !std::isfinite(l)) {
      std::ostringstream os;
      os << "lengthscale " << d << " must be positive and finite, got " << l;
      throw ContractViolation(os.str());
    }
  }
}

void GPHyperparams::validate() const {
  kernel.validate();
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ContractViolation("scale must be positive and finite");
  if (!(nugget >= 0.0) || !std::isfinite(nugget))
    throw ContractViolation("nugget must be non-negative and finite");
}

double kernel_1d(KernelFamily family, double lengthscale, double r) {
  r = std::abs(r);
  switch (family) {
    case KernelFamily::SquaredExponential: {
      const double u = r / lengthscale;
      return std::exp(-u * u);
    }
    case KernelFamily::Matern25: {
      const double s = kSqrt5 * r / lengthscale;
      return (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
  }
  return 0.0;
}

double kernel_value(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != spec.dims() || b.size() != spec.dims()) {
    std::ostringstream os;
    os << "kernel_value: expected " << spec.dims() << "-vectors, got " << a.size()
       << " and " << b.size();
    throw ContractViolation(os.str());
  }
  if (spec.family == KernelFamily::SquaredExponential) {
    double q = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      const double u = (a[d] - b[d]) / spec.lengthscales[d];
      q += u * u;
    }
    return std::exp(-q);
  }
  double k = 1.0;
  for (Eigen::Index d = 0; d < a.size(); ++d)
    k *= kernel_1d(spec.family, spec.lengthscales[d], a[d] - b[d]);
  return k;
}

Eigen::VectorXd kernel_row(const KernelSpec& spec, const Eigen::MatrixXd& X,
                           const Eigen::Ref<const Eigen::VectorXd>& x0) {
  if (X.cols() != spec.dims() || x0.size() != spec.dims())
    throw ContractViolation("kernel_row: dimension mismatch");
  Eigen::VectorXd r(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) r[i] = kernel_value(spec, X.row(i).transpose(), x0);
  return r;
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B) {
  if (A.cols() != spec.dims() || B.cols() != spec.dims())
    throw ContractViolation("kernel_matrix: dimension mismatch");
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      K(i, j) = kernel_value(spec, A.row(i).transpose(), B.row(j).transpose());
  return K;
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& A, double* jitter) {
  Eigen::MatrixXd L;
  if (A.allFinite() && try_cholesky(A, L)) {
    if (jitter) *jitter = 0.0;
    return L;
  }
  if (!A.allFinite()) throw SingularMatrixError("matrix has non-finite entries", 0.0);
  Eigen::MatrixXd B = A;
  double added = 0.0;
  for (double level = kJitterStart; level <= kJitterMax * 1.0000001; level *= 10.0) {
    B.diagonal().array() += level - added;
    added = level;
    if (try_cholesky(B, L)) {
      if (jitter) *jitter = level;
      return L;
    }
  }
  std::ostringstream os;
  os << "Cholesky factorization failed at maximum jitter " << kJitterMax;
  throw SingularMatrixError(os.str(), kJitterMax);
}

CorrelationMatrix::CorrelationMatrix(Eigen::MatrixXd values)
    : values_(std::move(values)) {
  if (values_.rows() != values_.cols())
    throw ContractViolation("correlation matrix must be square");
  factor_ = cholesky_with_jitter(values_, &jitter_);
}

Eigen::VectorXd CorrelationMatrix::solve(const Eigen::Ref<const Eigen::VectorXd>& b) const {
  Eigen::VectorXd z = factor_.triangularView<Eigen::Lower>().solve(b);
  return factor_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Eigen::MatrixXd CorrelationMatrix::solve_matrix(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd Z = factor_.triangularView<Eigen::Lower>().solve(B);
  return factor_.transpose().triangularView<Eigen::Upper>().solve(Z);
}

Eigen::MatrixXd CorrelationMatrix::inverse() const {
  Eigen::MatrixXd W = factor_;
  invert_lower(W);
  W.triangularView<Eigen::StrictlyUpper>().setZero();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), size());
  out.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose());
  return out.selfadjointView<Eigen::Lower>();
}

double CorrelationMatrix::log_determinant() const {
  return 2.0 * factor_.diagonal().array().log().sum();
}

CorrelationMatrix build_correlation(const KernelSpec& spec, double nugget,
                                    const Eigen::MatrixXd& X) {
  spec.validate();
  if (X.rows() < 1) throw ContractViolation("build_correlation: need at least one row");
  if (X.cols() != spec.dims()) throw ContractViolation("build_correlation: dimension mismatch");
  if (!X.allFinite()) throw ContractViolation("build_correlation: non-finite input");
  if (!(nugget >= 0.0) || !std::isfinite(nugget))
    throw ContractViolation("build_correlation: nugget must be non-negative and finite");
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd R(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    R(j, j) = 1.0 + nugget;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double k = kernel_value(spec, X.row(i).transpose(), X.row(j).transpose());
      if (nugget > 0.0 && X.row(i) == X.row(j)) k += nugget;
      R(i, j) = k;
      R(j, i) = k;
    }
  }
  return CorrelationMatrix(std::move(R));
}

double expect_k(KernelFamily family, double lengthscale, double mean, double variance,
                double w) {
  if (family != KernelFamily::SquaredExponential)
    throw NotImplementedError("expect_k: only the squared-exponential kernel is supported");
  if (!(variance >= 0.0)) throw ContractViolation("expect_k: variance must be non-negative");
  const double l2 = lengthscale * lengthscale;
  const double d = mean - w;
  // E exp(-(W-w)^2/l^2) = (1 + 2v/l^2)^{-1/2} exp(-(m-w)^2 / (l^2 + 2v))
  return std::exp(-d * d / (l2 + 2.0 * variance)) / std::sqrt(1.0 + 2.0 * variance / l2);
}

double expect_kk(KernelFamily family, double lengthscale, double mean, double variance,
                 double wi, double wj) {
  if (family != KernelFamily::SquaredExponential)
    throw NotImplementedError("expect_kk: only the squared-exponential kernel is supported");
  if (!(variance >= 0.0)) throw ContractViolation("expect_kk: variance must be non-negative");
  const double l2 = lengthscale * lengthscale;
  const double half_gap = 0.5 * (wi - wj);
  const double d = mean - 0.5 * (wi + wj);
  // (W-wi)^2 + (W-wj)^2 = 2 (W-c)^2 + (wi-wj)^2 / 2 with c the midpoint.
  return std::exp(-2.0 * half_gap * half_gap / l2 - 2.0 * d * d / (l2 + 4.0 * variance)) /
         std::sqrt(1.0 + 4.0 * variance / l2);
}

}  // namespace dgpsi
