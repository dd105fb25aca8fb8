#pragma once

#include <stdexcept>
#include <string>

namespace vibro {

// Configuration / validation problems. The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
  public:
    explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Runtime / numeric problems. The CLI maps these to exit code 3.
class RuntimeError : public std::runtime_error {
  public:
    explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace vibro
