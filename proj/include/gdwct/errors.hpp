#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gdwct {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or matrix shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument (bad axis, non-scalar backward root, out-of-range hop...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Channel count not divisible by group count.
class GroupDivisibilityError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Fewer than two samples where a covariance is required.
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Non-finite gradient or loss. `what()` names the offending quantity.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& msg)
      : Error(line == 0 ? msg : "line " + std::to_string(line) + ": " + msg), line_(line) {}

  // 1-based line of the offending entry; 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace gdwct
