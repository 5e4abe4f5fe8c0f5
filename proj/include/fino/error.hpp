#pragma once

#include <stdexcept>
#include <string>

namespace fino {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration or argument value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or failed format validation.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or other numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the gradient tape (non-scalar loss, double backward, ...).
class AutodiffError : public Error {
 public:
  using Error::Error;
};

}  // namespace fino
