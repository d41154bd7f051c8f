#include "colornorm/error.hpp"

namespace colornorm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::DegenerateBatch: return "degenerate-batch";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::ChecksumMismatch: return "checksum-mismatch";
    case ErrorCode::MalformedFile: return "malformed-file";
    case ErrorCode::UnsupportedFormat: return "unsupported-format";
    case ErrorCode::BadMaxval: return "bad-maxval";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::InsufficientTissue: return "insufficient-tissue";
    case ErrorCode::DegenerateStain: return "degenerate-stain";
    case ErrorCode::RejectionBudgetExhausted: return "rejection-budget-exhausted";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace colornorm
