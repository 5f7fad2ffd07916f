#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace milbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Raster bytes are malformed. `offset()` points at the first bad byte.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Caller passed an out-of-range parameter.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Tiling produced no grid cells.
class EmptyGridError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Bad magic bytes or unknown version in a binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Data is well-formed but violates an invariant (non-finite values, sizes, norms).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inputs that must come from the same computation do not match.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Metric is undefined for the given input.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace milbench
