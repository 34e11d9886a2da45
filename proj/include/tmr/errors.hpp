#pragma once

#include <stdexcept>
#include <string>

namespace tmr {

// Error taxonomy shared across the library. The CLI maps these onto
// distinct process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or unsatisfiable setting.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor/container dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range time index or class label.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Operation not permitted in the object's current state.
class StateError : public Error {
 public:
  using Error::Error;
};

// API contract violated by the caller (non-scalar loss, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File i/o, parsing, or malformed on-disk data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace tmr
