#pragma once

#include <stdexcept>
#include <string>

namespace vigil {

// Raised when inputs violate a documented precondition or file contract.
// The CLI maps it to exit code 1; anything else escaping a subcommand is a
// runtime failure (exit code 2).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace vigil
