#pragma once

#include <stdexcept>
#include <string>

namespace s2cast {

/// Malformed or inconsistent input data (ids, NaNs, ragged rows, bad files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value escaped an operation, or training diverged.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or option combinations.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace s2cast
