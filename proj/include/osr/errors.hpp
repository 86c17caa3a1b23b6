#pragma once

#include <stdexcept>
#include <string>

namespace osr {

/// User-facing configuration or usage problem (bad config, shape mismatch,
/// invalid split). Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem problem: missing file, unwritable directory, truncated data.
/// Maps to CLI exit code 1.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure at runtime: non-finite loss, diverged fit. Maps to CLI
/// exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace osr
