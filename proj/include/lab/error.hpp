#pragma once

#include <stdexcept>
#include <string>

namespace lab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an op's rules.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain of a function (log of a non-positive
/// number, zero-norm vector, q outside (0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration / input data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A training run produced a non-finite quantity.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace lab
