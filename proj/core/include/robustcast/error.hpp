#pragma once

#include <stdexcept>
#include <string>

namespace robustcast {

/// Broad failure class. Each maps to one CLI exit code.
enum class ErrorKind {
  Config,                 // bad configuration or dataset (exit 2)
  Data,                   // malformed or insufficient data (exit 2)
  Model,                  // forecaster failed (exit 3)
  Protocol,               // evaluation protocol violated (exit 3)
  DegradationUndefined,   // clean MSE is zero (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(ErrorKind::Model, what) {}
};

/// Raised when a benchmark scenario would leak into training, or when
/// reports that must match (same dataset, same evaluation setup) do not.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::Protocol, what) {}
};

class DegradationUndefinedError : public Error {
 public:
  explicit DegradationUndefinedError(const std::string& what)
      : Error(ErrorKind::DegradationUndefined, what) {}
};

int exit_code_for(ErrorKind kind) noexcept;

}  // namespace robustcast
