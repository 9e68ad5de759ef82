#pragma once

#include <stdexcept>
#include <string>

namespace stconv {

// Every error raised by the library derives from Error. The category drives
// the command-line exit code (see tools/cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array shapes or axis extents disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API precondition (wrong model kind, non-scalar loss...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Dataset content cannot support the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

// On-disk file does not match its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace stconv
