#pragma once

#include <stdexcept>
#include <string>

namespace co2sim {

// Bad inputs: malformed config, contract violations (dimension mismatch,
// out-of-range hyperparameters). Maps to CLI exit code 2.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values produced or consumed by a numeric operation.
// Maps to CLI exit code 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace co2sim
