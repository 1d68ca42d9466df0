#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rfdn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of a function (non-finite values, negative
/// entries for the entropy potential, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The metric is not positive-definite (or not invertible).
class SingularMetricError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class IncompleteSnapshotError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An object was used out of sequence, e.g. a forward cache that no longer
/// matches the network weights.
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `offset()` is a byte offset for binary formats and
/// a 1-based line number for text formats.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace rfdn
