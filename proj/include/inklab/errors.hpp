#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inklab {

// Root of every error the library raises. The subclasses mirror the failure
// classes callers are expected to distinguish (the CLI maps them to exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violations on caller-supplied values.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class RangeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Values that would overflow or otherwise leave the representable domain.
class DomainError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Not enough material (pool passages) to satisfy a request.
class CapacityError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Malformed span partitions and similar structural defects.
class StructureError : public Error {
 public:
  using Error::Error;
};

// Zero denominators, singular solves, constant vectors.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

}  // namespace inklab
