#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace colornorm {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  DegenerateBatch,
  NonFinite,
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  MalformedFile,
  UnsupportedFormat,
  BadMaxval,
  Truncated,
  InsufficientTissue,
  DegenerateStain,
  RejectionBudgetExhausted,
  Io,
  Config,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace colornorm
