#pragma once

#include <stdexcept>
#include <string>

namespace gr {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input rejected before or during validation (malformed file, bad shape, contract violation).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Optimization or evaluation produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gr
