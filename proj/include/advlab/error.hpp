#pragma once

#include <stdexcept>
#include <string>

namespace advlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input dimension does not match what the model or operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters: empty datasets, bad radii, unknown names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its precondition (e.g. wrong subspace).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace advlab
