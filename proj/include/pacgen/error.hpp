#pragma once

#include <stdexcept>
#include <string>

namespace pacgen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or invariant on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration (config file, CLI flags, spec file).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss or parameter became non-finite during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace pacgen
