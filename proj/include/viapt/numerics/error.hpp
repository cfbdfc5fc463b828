#pragma once

#include <stdexcept>
#include <string>

namespace viapt {

/// Root of every error the library throws. The CLI maps each subclass to an
/// exit code (config 2, numeric 3, format 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, SVD non-convergence, NaN gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ModeMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace viapt
