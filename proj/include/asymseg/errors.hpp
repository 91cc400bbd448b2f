#pragma once

#include <stdexcept>
#include <string>

namespace asymseg {

// Operand shapes do not fit the operation; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A user-facing configuration value is out of range or inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// An API precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Training aborted on a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, int batch, const std::string& msg)
      : std::runtime_error(msg), epoch(epoch), batch(batch) {}

  int epoch;
  int batch;
};

// Filesystem / container format failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A dataset or model does not match the configuration it is used with.
class FingerprintError : public std::runtime_error {
 public:
  explicit FingerprintError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace asymseg
