#pragma once

#include <stdexcept>
#include <string>

namespace uspil {

/// Invalid user-supplied configuration (bad dimensions, CFL violation,
/// empty domain, ...). Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Internal structural misuse: detached tape nodes, mismatched grids,
/// shape inconsistencies. Maps to CLI exit code 1.
class StructuralError : public std::logic_error {
 public:
  explicit StructuralError(const std::string& msg) : std::logic_error(msg) {}
};

/// Failure while computing: step-size underflow, NaN divergence,
/// non-finite gradients. Maps to CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace uspil
