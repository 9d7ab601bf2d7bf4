#pragma once

#include <stdexcept>
#include <string>

namespace lowbit {

// Bad arguments, shapes or values. The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Filesystem failures. The CLI maps these to exit code 1.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lowbit
