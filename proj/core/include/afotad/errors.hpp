#pragma once

#include <stdexcept>
#include <string>

namespace afotad {

// Bad configuration: invalid flags, malformed config JSON, impossible model
// geometry. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or missing data: unreadable files, schema violations, checkpoint/model
// shape mismatches. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure: NaN/Inf crossing a graph boundary, NaN gradients, gradient
// check above tolerance. CLI exit code 4.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace afotad
