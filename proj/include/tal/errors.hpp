#pragma once

#include <stdexcept>
#include <string>

namespace tal {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
struct DimensionError : Error {
  using Error::Error;
};

// Input too small/empty/zero-length for the requested operation.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar loss).
struct ContractError : Error {
  using Error::Error;
};

// File format / filesystem problems.
struct IoError : Error {
  using Error::Error;
};

}  // namespace tal
