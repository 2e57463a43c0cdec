#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smoe {

enum class ErrorCode {
  // usage
  InvalidArgument,
  // data
  FileTooShort,
  OddDimensions,
  ZeroFrames,
  OutOfBounds,
  IoFailure,
  FrameTooSmall,
  RasterTooSmall,
  ShapeMismatch,
  InsufficientCorrespondences,
  NoConsensus,
  DegenerateSample,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  InvariantViolation,
  ConfigParse,
  // numeric
  DegenerateDenominator,
  SingularProduct,
  SingularNormalEquations,
  GatingUnderflow,
  AllKernelsPruned,
  NonFinite,
};

enum class ErrorCategory { Usage, Data, Numeric };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

/// Library-wide exception. Every failure path raises this with a code that
/// callers (tests, the CLI's exit-code mapping) can inspect.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace smoe
