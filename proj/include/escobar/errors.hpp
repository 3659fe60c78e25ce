#pragma once

#include <stdexcept>
#include <string>

namespace escobar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A malformed or semantically invalid configuration document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An argument violates an operation's precondition (shape, sign, range).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The quotient is undefined for the given field (zero boundary or interior norm).
class UndefinedQuotient : public Error {
 public:
  using Error::Error;
};

/// A numerical precondition could not be certified, so the computation refuses
/// rather than reporting a value it cannot stand behind.
class NumericRefusal : public Error {
 public:
  using Error::Error;
};

/// An iterative method exhausted its budget.
class NonConvergence : public Error {
 public:
  using Error::Error;
};

}  // namespace escobar
