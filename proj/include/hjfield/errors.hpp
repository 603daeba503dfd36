#pragma once

#include <stdexcept>
#include <string>

namespace hjfield {

// All numerical failures derive from NumericalError so the pipeline can map
// them onto one exit code while keeping the module of origin in the message.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what) {}
};

class SingularHessian : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class NoConvergence : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class SingularJacobian : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class DegenerateSurface : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class NonFinite : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class SingularChart : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class OutOfDomain : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class CausticDetected : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class MissingArtifact : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Config problems are not numerical failures; they map to exit code 64.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hjfield
