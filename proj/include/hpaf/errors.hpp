#pragma once

#include <stdexcept>
#include <string>

namespace hpaf {

/// Base class for all errors raised by the pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file content (header line, byte stream, CSV cell).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Signal storage format code outside the supported set.
class UnsupportedFormat : public ParseError {
 public:
  using ParseError::ParseError;
};

/// CSV column index beyond the columns present in the file.
class ColumnOutOfRange : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Record parsed cleanly but holds no samples.
class EmptyRecord : public Error {
 public:
  using Error::Error;
};

/// Configuration value violates a precondition (maps to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Signal too short for the requested operation.
class SignalTooShort : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes incompatible for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API contract violated by the caller (non-scalar backward root, t out of
/// schedule range, empty mining pool).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Dataset cannot support the requested operation (too few subjects or beats,
/// empty gallery).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace hpaf
