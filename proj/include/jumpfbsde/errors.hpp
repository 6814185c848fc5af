#pragma once

#include <stdexcept>
#include <string>

namespace jumpfbsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated coefficient bound. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the domain of a formula (e.g. mu/(eta nu) >= 1).
/// Treated as a configuration problem by the CLI (exit code 2).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Overflow, non-finite residuals, or too many excluded paths. Exit code 3.
class NumericalRangeError : public Error {
 public:
  using Error::Error;
};

/// A verification check failed outright (not merely outside its band). Exit code 4.
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace jumpfbsde
