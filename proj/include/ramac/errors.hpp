#pragma once

#include <stdexcept>
#include <string>

namespace ramac {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// parameter/shape misuse, bad input data, malformed files, numerical aborts.

struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : ParamError {
  using ParamError::ParamError;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ramac
