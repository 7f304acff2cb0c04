#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace privsurf {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  RankOutOfRange,
  NonFinite,
  ZeroNorm,
  EmptyInput,
  MissingData,
  Io,
  Parse,
  Config,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. Every module error is one of these, tagged with a
/// code so the CLI can emit a machine-readable record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace privsurf
