#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reloop {

// Base for every error the library raises. `kind()` is a stable tag used in
// machine-readable error records.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

// Malformed input data: bad treatment codes, non-finite values, dimension
// mismatches, duplicate ids.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "DataError"; }
};

// An operation was called on data that does not meet its preconditions
// (empty arm, missing remnant predictions, singular design).
class PreconditionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "PreconditionError"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "ConfigError"; }
};

// Text-format error with a 1-based location. column is 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(message), line_(line), column_(column) {}
  const char* kind() const noexcept override { return "ParseError"; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace reloop
