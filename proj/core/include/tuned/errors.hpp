#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tuned {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (lgamma(0), off-simplex point, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on values was violated (negative evidence, alpha < 1).
class ContractError : public Error {
 public:
  using Error::Error;
};

std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace tuned
