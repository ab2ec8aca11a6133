#pragma once

#include <stdexcept>
#include <string>

namespace mactas {

// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke a precondition (missing gradient, empty batch, no legal action, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An attention query row has no admissible key.
class DegenerateMaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mactas
