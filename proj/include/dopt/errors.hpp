#pragma once

#include <stdexcept>
#include <string>

namespace dopt {

// Shape or emptiness violations on matrix arguments.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad user-facing configuration (unknown algorithm, missing parameter,
// inconsistent initialization, malformed file).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failure inside an iterative solver. Distinct from a clean
// "infeasible" answer, which is reported through return values.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A closed-form expression was evaluated at a pole. `factor` names the
// vanishing denominator.
struct SingularityError : std::runtime_error {
  explicit SingularityError(const std::string& factor)
      : std::runtime_error("singular factor: " + factor), factor(factor) {}
  std::string factor;
};

// Parameter design could not be completed (e.g. no qualifying cubic root).
struct DesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dopt
