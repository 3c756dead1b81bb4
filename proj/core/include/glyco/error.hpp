#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glyco {

enum class ErrorKind {
  InvalidValue,
  InsufficientData,
  Format,
  Shape,
  Domain,
  Config,
  Io,
  Numeric,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; callers switch on kind() when they
/// need to map failures onto exit codes or retry policy.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace glyco
