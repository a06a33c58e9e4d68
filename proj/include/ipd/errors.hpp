#pragma once

#include <stdexcept>
#include <string>

namespace ipd {

// Bad user or programmatic configuration (unknown mode, population too small, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument shape or domain violation at a call site (dimension mismatch, empty input).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite loss or parameters during training.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ipd
