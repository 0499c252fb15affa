#pragma once

#include <stdexcept>
#include <string>

namespace mafd {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON syntax, wrong types, unknown keys).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operands whose sizes do not fit together (e.g. gains for another network).
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical failure: non-convergence, singularity, infeasibility, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mafd
