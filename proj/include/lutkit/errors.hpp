#pragma once

#include <stdexcept>
#include <string>

namespace lutkit {

/// Base class for every error the library raises. The CLI maps
/// exit_code() straight to the process exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or inconsistent shapes (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Bad input data: NaNs, unreadable files, corrupted indices (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

/// Training produced a non-finite loss (exit code 4).
class DivergenceError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace lutkit
