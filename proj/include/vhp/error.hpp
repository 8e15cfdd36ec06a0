#pragma once

#include <stdexcept>
#include <string>

namespace vhp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside an operation's mathematical domain (e.g. log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A forward value or gradient became NaN or infinite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// No path between two graph nodes.
class NoPathError : public Error {
 public:
  using Error::Error;
};

}  // namespace vhp
