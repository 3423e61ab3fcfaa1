#pragma once

#include <stdexcept>
#include <string>

namespace kmoco {

// Base class for every error raised by the library. The CLI maps each
// subclass onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a tensor, or a zero vector fed to L2 normalization.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class RetrievalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic or unsupported version in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace kmoco
