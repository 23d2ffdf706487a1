#pragma once

#include <stdexcept>
#include <string>

namespace cpsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside an operation's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value or invariant violation inside the integrator.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, int stage)
      : Error(what), stage_(stage) {}

  /// RK4 stage (1-4) that produced the bad value, 0 for the final state check.
  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

class EquilibriumError : public Error {
 public:
  EquilibriumError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class LinearizationError : public Error {
 public:
  using Error::Error;
};

class DiscretizationError : public Error {
 public:
  using Error::Error;
};

class SynthesisError : public Error {
 public:
  using Error::Error;
};

class EstimatorError : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class AttackError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Failure during a scenario run, tagged with the bus tick it happened on.
class ScenarioError : public Error {
 public:
  ScenarioError(const std::string& what, long long tick)
      : Error(what), tick_(tick) {}

  long long tick() const noexcept { return tick_; }

 private:
  long long tick_;
};

}  // namespace cpsim
