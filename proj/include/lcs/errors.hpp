#pragma once

#include <stdexcept>
#include <string>

namespace lcs {

// Invalid configuration or schema violation (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization failure (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lcs
