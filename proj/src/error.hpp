#pragma once

#include <stdexcept>
#include <string>

namespace rgcn {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  Io,
  Parse,
  Numeric,
};

/// Base exception for all library failures. The kind maps onto the C status
/// codes exposed by the shared library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorKind::InvalidArgument, what);
}
inline Error dimension_mismatch(const std::string& what) {
  return Error(ErrorKind::DimensionMismatch, what);
}
inline Error io_error(const std::string& what) { return Error(ErrorKind::Io, what); }
inline Error parse_error(const std::string& what) { return Error(ErrorKind::Parse, what); }
inline Error numeric_error(const std::string& what) {
  return Error(ErrorKind::Numeric, what);
}

}  // namespace rgcn
