#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace capsim {

/// Thrown when a configuration or argument violates a documented invariant.
class InvalidConfig : public std::runtime_error {
 public:
  explicit InvalidConfig(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when the integrator detects a non-finite or out-of-range state.
class SimulationError : public std::runtime_error {
 public:
  explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an exact solver would exceed its node budget.
class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace capsim
