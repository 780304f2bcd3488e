#pragma once

#include <stdexcept>
#include <string>

namespace polyrad {

// Base of every error this library throws. The CLI maps the subclasses onto
// exit codes: UsageError -> 1, DataError family -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public UsageError {
 public:
  using UsageError::UsageError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class DatasetError : public DataError {
 public:
  using DataError::DataError;
};

class SpecError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

/// Empty masks, zero medians, no eligible pixels.
class DegenerateInputError : public DataError {
 public:
  using DataError::DataError;
};

/// Fewer observations than unknowns.
class UnderdeterminedError : public DataError {
 public:
  using DataError::DataError;
};

/// Scene without any radar return.
class NoRadarError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Constant regressor in a linear fit.
class RankError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Normal equations too ill-conditioned even with ridge damping.
class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace polyrad
