#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fkp {

/// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared in a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Unsupported configuration value (scale factor, learning rate, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid kernel parameters, e.g. a singular covariance.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be processed (too small, wrong channel count, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A kernel or latent vector collapsed to zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace fkp
