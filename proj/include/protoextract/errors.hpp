#pragma once

#include <stdexcept>
#include <string>

namespace protoextract {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad caller input: empty supports, malformed weights, invalid options.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Points or distributions of incompatible dimension.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Numerical failure at runtime: divergence, NaN, iteration caps.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

/// Filesystem or parsing problems.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Config document problems; message names the offending key or path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace protoextract
