#pragma once

#include <stdexcept>
#include <string>

namespace pfl {

// Base class for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/model shape mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (empty input, nonpositive count, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (bad magic, wrong field count, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Class label outside the valid range.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Not enough data to satisfy a partition/split request.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfl
