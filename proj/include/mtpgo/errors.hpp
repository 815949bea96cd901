#pragma once

#include <stdexcept>
#include <string>

namespace mtpgo {

// Invalid or inconsistent configuration (bad dimensions, contradictory flags,
// malformed config files). Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CSV parse failures, bad checkpoints,
// corrupt forecast files). Maps to CLI exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or numerically invalid states detected at runtime. Maps
// to CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtpgo
