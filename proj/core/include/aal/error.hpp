#pragma once

#include <stdexcept>
#include <string>

namespace aal {

// Every failure raised by the library derives from Error so callers can
// catch broadly; the CLI maps each subclass to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 6; }
};

// All link weights equal, so min-max normalization is undefined.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 7; }
};

}  // namespace aal
