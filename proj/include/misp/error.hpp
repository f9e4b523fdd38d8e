#pragma once

#include <stdexcept>
#include <string>

namespace misp {

// Base class for all library errors. The CLI maps subclasses onto its
// documented exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches and empty inputs where a shape is required.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Arguments outside a function's mathematical domain (e.g. KL outside (0,1),
// proposal probabilities <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vectors fed to cosine or selection.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Fewer data points than the operation needs (PCA, empty pools/batches).
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: bad hyperparameters, missing text pair with
// lambda > 0, unknown enum values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with input files: missing, corrupt, inconsistent ids or dims.
class DataError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss. Message names the epoch/step.
class DivergedError : public Error {
 public:
  using Error::Error;
};

}  // namespace misp
