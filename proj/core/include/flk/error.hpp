#pragma once

#include <stdexcept>
#include <string>

namespace flk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or layouts that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, degenerate inputs, diverging losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kShapeOverflow, kUnexpectedNames, kMissingNames, kShapeMismatch, kIo };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace flk
