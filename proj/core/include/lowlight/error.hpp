#pragma once

#include <stdexcept>
#include <string>

namespace lowlight {

// Error classes are stable: the CLI maps each one to its own exit code.
enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kIo,
  kFormat,
  kNumeric,
  kNotFound,
  kInvariant,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message)
      : Error(ErrorKind::kShapeMismatch, message) {}
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(ErrorKind::kIo, path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message)
      : Error(ErrorKind::kFormat, message) {}
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::kInvalidArgument, message);
}

}  // namespace lowlight
