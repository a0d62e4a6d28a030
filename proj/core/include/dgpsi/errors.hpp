#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgpsi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument (shape, finiteness, range) was violated.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Factorization failed even after the largest jitter was added.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, double jitter)
      : Error(what), jitter_(jitter) {}
  double jitter() const noexcept { return jitter_; }

 private:
  double jitter_;
};

class NotImplementedError : public Error {
 public:
  using Error::Error;
};

/// Data cannot support the requested fit (e.g. constant outputs).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Hyperparameter optimisation did not produce a finite objective.
/// Carries the best parameters seen, in log space, when any were finite.
class FitFailure : public Error {
 public:
  FitFailure(const std::string& what, std::vector<double> best_log_params,
             double best_objective)
      : Error(what),
        best_log_params_(std::move(best_log_params)),
        best_objective_(best_objective) {}
  const std::vector<double>& best_log_params() const noexcept {
    return best_log_params_;
  }
  double best_objective() const noexcept { return best_objective_; }

 private:
  std::vector<double> best_log_params_;
  double best_objective_;
};

/// Elliptical slice sampler bracket collapsed without finding an acceptable point.
class EssStall : public Error {
 public:
  EssStall(const std::string& what, std::vector<double> state)
      : Error(what), state_(std::move(state)) {}
  const std::vector<double>& state() const noexcept { return state_; }

 private:
  std::vector<double> state_;
};

class SemError : public Error {
 public:
  SemError(const std::string& what, std::size_t iteration, std::string node)
      : Error(what), iteration_(iteration), node_(std::move(node)) {}
  std::size_t iteration() const noexcept { return iteration_; }
  const std::string& node() const noexcept { return node_; }

 private:
  std::size_t iteration_;
  std::string node_;
};

class SequentialFitError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class EmptyWindowError : public Error {
 public:
  using Error::Error;
};

class EmptyColumnError : public Error {
 public:
  using Error::Error;
};

class DegenerateColumnError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class IncompleteResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgpsi
