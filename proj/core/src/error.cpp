#include "glyco/error.hpp"

namespace glyco {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidValue: return "invalid_value";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Format: return "format";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace glyco
