#pragma once

#include <stdexcept>
#include <string>

namespace fdboot {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input problems: bad shapes, bad parameters, malformed files. The CLI maps
// these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class InvalidParameter : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class UnsupportedK : public InputError {
 public:
  using InputError::InputError;
};

// Numerical failures: the data do not support the requested computation.
// The CLI maps these to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateGroup : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InvalidKernel : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RankDeficiency : public NumericalError {
 public:
  RankDeficiency(const std::string& what, int index)
      : NumericalError(what), index_(index) {}

  // 1-based index of the first eigenvalue that failed the positivity check.
  int index() const noexcept { return index_; }

 private:
  int index_;
};

class SingularCovariance : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateDistribution : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BootstrapFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace fdboot
