#pragma once

#include <stdexcept>
#include <string>

namespace heatctl {

/// Base class for every failure this library reports deliberately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tridiagonal elimination hit a pivot below the representable floor.
class ZeroPivot : public Error {
 public:
  using Error::Error;
};

/// An iterative method exhausted its budget without meeting its tolerance.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// A time slice of a linear solve exceeded the instability cap.
class InstabilityGuard : public Error {
 public:
  using Error::Error;
};

/// Penalized steering to zero missed its residual target after all retries.
class NullControlFailure : public Error {
 public:
  using Error::Error;
};

/// The retained Gramian spectrum is empty.
class EmptySpectrum : public Error {
 public:
  using Error::Error;
};

/// Adaptive mode selection cannot meet its error budget with the retained spectrum.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or infinity where a finite value is required.
class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

/// A fixed-point iterate exceeded the configured sup-norm cap.
class BlowUp : public Error {
 public:
  using Error::Error;
};

/// Malformed input (JSON syntax, unknown keys, broken CSV schema).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid input that violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Not enough usable data points for a fit.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace heatctl
