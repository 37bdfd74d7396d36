#pragma once

#include <stdexcept>
#include <string>

namespace opclab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or precondition violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Least-squares regressor matrix without full column rank.
class SingularFitError : public Error {
 public:
  SingularFitError(const std::string& what, int deficient_column)
      : Error(what), deficient_column_(deficient_column) {}
  int deficient_column() const { return deficient_column_; }

 private:
  int deficient_column_;
};

/// A replay or OPC query ran past the end of its reference trajectory.
class OutOfDataError : public Error {
 public:
  using Error::Error;
};

/// Linear system too ill-conditioned to solve.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// Closed loop outside the stability region where a quantity is defined.
class UnstableSystemError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : Error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace opclab
