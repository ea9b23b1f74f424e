#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace chainsearch {

// Any failure caused by bad inputs or an impossible request. The CLI maps
// these to exit status 1.
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public DomainError {
public:
  explicit ValidationError(std::vector<std::string> violations)
      : DomainError(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += " [" + s + "]";
    return out;
  }
  std::vector<std::string> violations_;
};

// Metric is not defined for the given labels (e.g. AUC with one class).
class UndefinedMetricError : public DomainError {
public:
  using DomainError::DomainError;
};

class InvalidArchitectureError : public DomainError {
public:
  using DomainError::DomainError;
};

class TrainingDivergedError : public DomainError {
public:
  using DomainError::DomainError;
};

class CheckpointError : public DomainError {
public:
  using DomainError::DomainError;
};

}  // namespace chainsearch
