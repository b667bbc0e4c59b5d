#pragma once

#include <stdexcept>
#include <string>

namespace rwre {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or a violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A walk or solver needed a kernel outside the stored environment box.
class BoxExhausted : public Error {
 public:
  using Error::Error;
};

/// A walk hit its safety step cap before the stop rule triggered.
class StepCapHit : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A field was queried at a point where it is not defined.
class MissingValue : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace rwre
