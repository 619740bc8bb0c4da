#pragma once

#include <stdexcept>
#include <string>

namespace forcekf {

/// Base of every error raised by the library. Carries the name of the
/// module that raised it so the CLI can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or out-of-order input data (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Singular systems, degenerate rotations and similar (CLI exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Metrics that cannot be computed from the given series, e.g. too little
/// overlap with ground truth (CLI exit code 2).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace forcekf
