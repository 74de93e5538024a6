#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skewt_estim {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Truncation along a direction with (numerically) zero variance.
class DegenerateDirection : public Error {
 public:
  DegenerateDirection(std::size_t index, double variance)
      : Error("degenerate truncation direction " + std::to_string(index) +
              " (variance " + std::to_string(variance) + ")"),
        index_(index),
        variance_(variance) {}

  std::size_t index() const noexcept { return index_; }
  double variance() const noexcept { return variance_; }

 private:
  std::size_t index_;
  double variance_;
};

/// A matrix that must be positive definite was not, even after jitter.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, double min_eigenvalue)
      : Error(what + " (smallest eigenvalue " + std::to_string(min_eigenvalue) + ")"),
        min_eigenvalue_(min_eigenvalue) {}

  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class OracleInfeasible : public Error {
 public:
  using Error::Error;
};

class MomentsUndefined : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double error_estimate, double value)
      : Error(what + " (estimate " + std::to_string(value) + ", error " +
              std::to_string(error_estimate) + ")"),
        error_estimate_(error_estimate),
        value_(value) {}

  double error_estimate() const noexcept { return error_estimate_; }
  double value() const noexcept { return value_; }

 private:
  double error_estimate_;
  double value_;
};

/// All particle weights vanished at a time step.
class WeightDegeneracy : public Error {
 public:
  explicit WeightDegeneracy(std::size_t step)
      : Error("particle weights degenerate at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Wraps an error raised while processing time step `step` (and, for the
/// smoother, outer VB iteration `iteration`).
class StepError : public Error {
 public:
  StepError(const std::string& what, std::size_t step, std::size_t iteration = 0)
      : Error(what + " [step " + std::to_string(step) +
              (iteration ? ", iteration " + std::to_string(iteration) : std::string{}) + "]"),
        step_(step),
        iteration_(iteration) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t step_;
  std::size_t iteration_;
};

}  // namespace skewt_estim
