#pragma once

#include <stdexcept>
#include <string>

namespace persuasion {

// A precondition of an operation was violated by the caller.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A configuration could not be resolved (unknown registry name, bad budget, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data is malformed or inconsistent. Carries the 1-based line/row when known.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, long row = 0)
      : std::runtime_error(row > 0 ? what + " (row " + std::to_string(row) + ")" : what),
        row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

// Training diverged or was asked to fit a degenerate dataset.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace persuasion
