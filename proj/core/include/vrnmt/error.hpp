#pragma once

#include <stdexcept>
#include <string>

namespace vrnmt {

// Base for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or configuration (CLI exit code 1).
struct UsageError : Error {
  using Error::Error;
};

// Malformed or inconsistent data: files, formats, vocab/id ranges (exit code 2).
struct DataError : Error {
  using Error::Error;
};

// Numerical failure: non-finite values, failed gradient check (exit code 3).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace vrnmt
