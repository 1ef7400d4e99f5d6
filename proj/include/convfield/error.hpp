#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace convfield {

enum class ErrorKind {
  Parse,
  NonManifold,
  DegenerateGeometry,
  LowAcceptance,
  DegenerateHull,
  OracleStarvation,
  EmptyInterior,
  Indivisible,
  NonConvexInput,
  InvalidArgument,
  Io,
  Internal,
};

std::string_view to_string(ErrorKind kind);

// Every library failure is reported as an Error carrying a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    fail(ErrorKind::InvalidArgument, message);
  }
}

} // namespace convfield
