#pragma once

#include <stdexcept>
#include <string>

namespace colora {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: non-finite data, wrong shapes, out-of-range parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure (Newton, adaptive stepping, training) failed.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable configuration / file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, written or renamed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace colora
