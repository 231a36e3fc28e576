#pragma once

#include <stdexcept>
#include <string>

namespace exprnn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (non-finite values, non-skew
/// matrix where skew is required, non-orthogonal base point, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A cached kernel was read after its parameters changed.
class StaleCacheError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file's leading magic number names a different record type.
class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A file ends before its header or declared payload does.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace exprnn
