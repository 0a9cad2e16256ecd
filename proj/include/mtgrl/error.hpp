#pragma once

#include <stdexcept>
#include <string>

namespace mtgrl {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data; messages carry file and line.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Random sampling could not satisfy its constraints.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Reconstruction target has zero norm, so a relative error is undefined.
class DegenerateTargetError : public Error {
 public:
  using Error::Error;
};

/// A probe split does not contain enough classes to fit a classifier.
class SplitError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtgrl
