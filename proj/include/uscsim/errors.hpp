#pragma once

#include <stdexcept>
#include <string>

namespace uscsim {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operator / layout sizes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A Fock cut is too small for the requested state or evolution.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double deficit)
      : Error(what + " (deficit " + std::to_string(deficit) + ")"), deficit_(deficit) {}
  double deficit() const noexcept { return deficit_; }

 private:
  double deficit_;
};

/// Integrator failure, trace drift, non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid scenario or parameter record.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A measurement branch with (numerically) zero probability was requested.
class DegenerateOutcomeError : public Error {
 public:
  using Error::Error;
};

}  // namespace uscsim
