#pragma once

#include <stdexcept>
#include <string>

namespace loopent {

// Bad input: out-of-range parameters, malformed grids, non-physical states.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure failed: non-convergence, loss of realness, overflow guards.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace loopent
