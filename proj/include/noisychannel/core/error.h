#pragma once

#include <stdexcept>
#include <string>

namespace nc {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or model files (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

// Violated precondition on arguments or configuration.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Remote scorer connection failures and timeouts.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace nc
