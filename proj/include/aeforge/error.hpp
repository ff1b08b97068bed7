#pragma once

#include <stdexcept>
#include <string>

namespace aeforge {

// Base of every error raised by the library. The CLI maps ValidationError
// (and its subclasses) to exit code 1 and IoError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor dimensions or image sizes do not fit the operation.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Image smaller than the requested crop.
class TooSmallError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// API misuse: backward twice, non-scalar loss, missing gradient.
class UsageError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. Carries the byte offset where parsing failed.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace aeforge
