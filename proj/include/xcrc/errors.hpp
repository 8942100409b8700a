#pragma once

#include <stdexcept>
#include <string>

namespace xcrc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix/vector shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or malformed input values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: ill-conditioned solves, degenerate coding vectors.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File system and parsing failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace xcrc
