#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace morphoprobe {

// Base of every error raised by the toolkit. The CLI maps UsageError to exit
// code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  explicit ParseError(const std::string& message) : Error(message) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& message, int status, int attempts, double retry_after_s)
      : Error(message), status_(status), attempts_(attempts), retry_after_s_(retry_after_s) {}

  int status() const noexcept { return status_; }
  int attempts() const noexcept { return attempts_; }
  double retry_after_seconds() const noexcept { return retry_after_s_; }

 private:
  int status_;
  int attempts_;
  double retry_after_s_;
};

// A quantity is undefined for the given inputs (zero baseline accuracy, a task
// whose full and fully masked accuracies coincide).
class UndefinedError : public DataError {
 public:
  using DataError::DataError;
};

// Raised when a value, loss or gradient becomes NaN or infinite during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace morphoprobe
