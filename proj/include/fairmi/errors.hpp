#pragma once

#include <stdexcept>
#include <string>

namespace fairmi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of the arguments do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV contents, class vectors, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A classifier or regressor could not be fitted (singular system, inner
/// optimiser failure, non-finite values).
class FitError : public Error {
 public:
  using Error::Error;
};

/// The normaliser of an NMI ratio is too close to zero for the ratio to carry
/// signal (e.g. A is determined by Y under separation).
class NormaliserDegenerate : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairmi
