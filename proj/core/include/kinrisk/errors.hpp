#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kinrisk {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid input or a violated precondition.
class ValidationError : public Error {
public:
  using Error::Error;
};

// Malformed input file; row is 1-based and counts the header as row 1.
class ParseError : public ValidationError {
public:
  ParseError(std::size_t row, const std::string& what)
      : ValidationError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

// Singular systems, non-finite values, failed convergence.
class NumericalError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace kinrisk
