#pragma once

#include <stdexcept>
#include <string>

namespace dcpr {

// Base for every error raised by the library. The CLI maps subclasses onto
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data (CSV rows, empty datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kVersion, kHash, kTruncated, kKind, kFormat };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// A training stage could not complete (non-finite loss, missing inputs).
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcpr
