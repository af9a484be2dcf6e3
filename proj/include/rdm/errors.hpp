#pragma once

#include <stdexcept>
#include <string>

namespace rdm {

// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing, malformed or inconsistent data files (CLI exit code 3).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite or exploding loss during training (CLI exit code 4).
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rdm
