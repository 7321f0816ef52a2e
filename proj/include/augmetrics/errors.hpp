#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace augmetrics {

/// Invalid argument, configuration, or precondition. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file content (binary records, CSV, checkpoints).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, singular matrices and similar failures. Exit code 2.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericalError {
public:
  DivergenceError(std::int64_t step, const std::string &what)
      : NumericalError(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

private:
  std::int64_t step_;
};

/// A transform whose randomness is continuous was asked for an exact
/// outcome enumeration.
class NotDiscreteError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

} // namespace augmetrics
