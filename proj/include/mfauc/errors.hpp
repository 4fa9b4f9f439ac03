#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfauc {

/// Base of every error raised by the library. `ValidationError` covers bad
/// inputs and parameters; `RuntimeError` covers failures during execution.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class RuntimeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DuplicateEntryError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParameterError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyResultError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A user whose relevant or irrelevant item set is empty.
class DegenerateUserError : public ValidationError {
 public:
  DegenerateUserError(long user, const std::string& what)
      : ValidationError("user " + std::to_string(user) + ": " + what),
        user_(user) {}
  long user() const noexcept { return user_; }

 private:
  long user_;
};

class UndefinedMetricError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class DivergenceError : public RuntimeError {
 public:
  DivergenceError(long iteration, const std::string& what)
      : RuntimeError("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace mfauc
