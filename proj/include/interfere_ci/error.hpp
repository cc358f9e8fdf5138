#pragma once

#include <stdexcept>
#include <string>

namespace interfere {

// Bad user input: malformed files, out-of-range parameters, degenerate designs.
// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace interfere
