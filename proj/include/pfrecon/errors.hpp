#pragma once

#include <stdexcept>
#include <string>

namespace pfrecon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point or argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API misuse: mismatched spaces, missing background trajectory, bad sizes.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration. `key` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Linear or nonlinear solver failure.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfrecon
