#pragma once

#include <stdexcept>
#include <string>

namespace mkgcn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A domain type invariant does not hold (asymmetric adjacency, bad label, ...).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : Error("non-finite gradient in parameter '" + parameter + "'"), parameter_(parameter) {}

  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

/// Backward pass invoked with a tape that no longer matches the network state.
class StaleTape : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mkgcn
