#pragma once

#include <stdexcept>
#include <string>

namespace sock {

/// Malformed input file (names the offending record where possible).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structurally valid file violating a dataset/model invariant.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPsdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite state encountered during integration; carries the step index.
struct NonFiniteError : std::runtime_error {
  long step;
  NonFiniteError(const std::string& what, long step_index)
      : std::runtime_error(what), step(step_index) {}
};

/// Transition covariance not positive definite; carries the transition index.
struct SingularCovariance : std::runtime_error {
  long index;
  SingularCovariance(const std::string& what, long transition_index)
      : std::runtime_error(what), index(transition_index) {}
};

}  // namespace sock
