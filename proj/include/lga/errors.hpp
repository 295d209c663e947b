#pragma once

#include <stdexcept>
#include <string>

namespace lga {

// Invalid input/config; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File-level failure; the CLI maps this to exit code 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lga
