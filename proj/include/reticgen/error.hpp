#pragma once

#include <stdexcept>
#include <string>

namespace reticgen {

// Input files, configuration or checkpoints that fail validation. The CLI maps
// this family to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or model dimensions that do not line up.
class ConfigurationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A caller broke an operation's precondition (stepping a terminal state,
// taking a masked action, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A state with no valid action. Topology validation makes this unreachable.
class DeadEndError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite loss or gradient during training.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EnumerationLimitError : public std::runtime_error {
 public:
  EnumerationLimitError(const std::string& what, double estimated_count)
      : std::runtime_error(what), estimated_count_(estimated_count) {}
  double estimated_count() const noexcept { return estimated_count_; }

 private:
  double estimated_count_;
};

// Malformed or degenerate numerical input (constant regressor, coincident
// atoms, singular cell, ...).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reticgen
