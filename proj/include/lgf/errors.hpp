#pragma once

#include <stdexcept>
#include <string>

namespace lgf {

/// Invalid user input: configuration, parameters, malformed tables.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters are valid in form but put the model outside the regime where a
/// computation is defined (non positive-definite C, vanishing brackets, ...).
class RegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigen decomposition refused: defective or ill-conditioned matrix.
class NonDiagonalizableError : public RegimeError {
 public:
  using RegimeError::RegimeError;
};

/// Internal consistency guard tripped. Always a bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace lgf
