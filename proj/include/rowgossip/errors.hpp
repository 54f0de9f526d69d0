#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rowgossip {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kInvariantFailure = 1,
  kConfigError = 2,
  kNumericalError = 3,
};

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kConfigError; }
};

/// Bad arguments: sizes, shapes, out-of-range parameters.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// The graph or matrix violates a structural requirement (self-loops,
/// connectivity, row-stochasticity, primitivity).
class InvalidGraph : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A randomized generator could not produce a valid instance.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition that depends on computed quantities (e.g. a
/// power below the diagonal-floor threshold).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumericalError; }
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericalError(what + " (final residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Raised when a node would have to invert a diagonal Perron estimate at or
/// below the configured floor.
class SmallDiagonalError : public NumericalError {
 public:
  SmallDiagonalError(std::size_t node, long long iteration, double value)
      : NumericalError("diagonal estimate " + std::to_string(value) + " at node " +
                       std::to_string(node) + " after " + std::to_string(iteration) +
                       " rounds is below the floor"),
        node_(node),
        iteration_(iteration),
        value_(value) {}
  std::size_t node() const noexcept { return node_; }
  long long iteration() const noexcept { return iteration_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t node_;
  long long iteration_;
  double value_;
};

class InvariantFailure : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kInvariantFailure; }
};

}  // namespace rowgossip
