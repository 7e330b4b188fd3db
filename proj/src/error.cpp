#include "hop/error.hpp"

namespace hop {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kLabel: return "label";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kEmptySequence: return "empty_sequence";
    case ErrorKind::kRouting: return "routing";
    case ErrorKind::kState: return "state";
    case ErrorKind::kData: return "data";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kSize: return "size";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace hop
