#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pikirec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument or out-of-domain value.
class ValueError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// CSV header does not match the expected columns.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string column)
      : Error(what), column_(std::move(column)) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

// Unparsable CSV row.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Model file problems.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};
class HeaderError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class DimensionError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class TruncationError : public ModelFormatError {
 public:
  TruncationError(const std::string& what, std::size_t expected, std::size_t actual)
      : ModelFormatError(what), expected_(expected), actual_(actual) {}
  std::size_t expected_bytes() const { return expected_; }
  std::size_t actual_bytes() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// Non-finite gradient or parameter during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace pikirec
