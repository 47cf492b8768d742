#pragma once

#include <stdexcept>
#include <string>

namespace maglattice {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, violated preconditions, malformed input files.
class InputError : public Error {
 public:
  using Error::Error;
};

// The inputs are well formed but the physics does not cooperate
// (no structure, Majorana point, unreachable objective, ...).
class PhysicsError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

}  // namespace maglattice
