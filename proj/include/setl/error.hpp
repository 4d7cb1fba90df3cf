#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace setl {

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  io,
  format,
  numeric,
  config,
  fingerprint_mismatch,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the toolkit. The kind drives CLI exit codes.
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

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace setl
