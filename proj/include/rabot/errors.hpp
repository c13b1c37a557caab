#pragma once

#include <stdexcept>
#include <string>

namespace rabot {

// Bad config file or command-line usage. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent dataset on disk. CLI exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated API precondition (caller bug). CLI exit code 4.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Incompatible tensor shapes.
struct DimensionError : ContractError {
  explicit DimensionError(const std::string& msg) : ContractError(msg) {}
};

// Runtime numeric failure (divergence, NaN/Inf). CLI exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rabot
