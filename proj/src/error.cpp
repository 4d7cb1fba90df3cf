#include "setl/error.hpp"

namespace setl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::fingerprint_mismatch: return "fingerprint_mismatch";
  }
  return "unknown";
}

}  // namespace setl
