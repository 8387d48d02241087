#pragma once

#include <stdexcept>
#include <string>

namespace qmcmc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State space too large for dense storage, or mismatched shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its domain (bad argument, wrong model type).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Eigensolver failure, quadrature that did not converge, iteration caps.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DetailedBalanceError : public Error {
 public:
  DetailedBalanceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Raised when the lowest-order small-field proposal would put more than unit
/// probability mass off the diagonal of some row.
class PerturbativeRegimeError : public Error {
 public:
  PerturbativeRegimeError(const std::string& what, double max_field)
      : Error(what), max_field_(max_field) {}
  /// Largest transverse field for which every row stays normalisable.
  double max_field() const noexcept { return max_field_; }

 private:
  double max_field_;
};

}  // namespace qmcmc
