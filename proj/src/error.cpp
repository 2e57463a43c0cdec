#include "smoe/error.hpp"

namespace smoe {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::FileTooShort: return "file-too-short";
    case ErrorCode::OddDimensions: return "odd-dimensions";
    case ErrorCode::ZeroFrames: return "zero-frames";
    case ErrorCode::OutOfBounds: return "out-of-bounds";
    case ErrorCode::IoFailure: return "io-failure";
    case ErrorCode::FrameTooSmall: return "frame-too-small";
    case ErrorCode::RasterTooSmall: return "raster-too-small";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::InsufficientCorrespondences: return "insufficient-correspondences";
    case ErrorCode::NoConsensus: return "no-consensus";
    case ErrorCode::DegenerateSample: return "degenerate-sample";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::TruncatedFile: return "truncated-file";
    case ErrorCode::InvariantViolation: return "invariant-violation";
    case ErrorCode::ConfigParse: return "config-parse";
    case ErrorCode::DegenerateDenominator: return "degenerate-denominator";
    case ErrorCode::SingularProduct: return "singular-product";
    case ErrorCode::SingularNormalEquations: return "singular-normal-equations";
    case ErrorCode::GatingUnderflow: return "gating-underflow";
    case ErrorCode::AllKernelsPruned: return "all-kernels-pruned";
    case ErrorCode::NonFinite: return "non-finite";
  }
  return "unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
      return ErrorCategory::Usage;
    case ErrorCode::DegenerateDenominator:
    case ErrorCode::SingularProduct:
    case ErrorCode::SingularNormalEquations:
    case ErrorCode::GatingUnderflow:
    case ErrorCode::AllKernelsPruned:
    case ErrorCode::NonFinite:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace smoe
