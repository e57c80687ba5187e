#pragma once

#include <stdexcept>
#include <string>

namespace chartab {

// Base of every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: bad CSV, unknown characters, schema mismatch.
class DataError : public Error {
 public:
  using Error::Error;
};

// Incompatible tensor shapes or model dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace chartab
