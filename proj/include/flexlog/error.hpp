#pragma once

#include <stdexcept>
#include <string>

namespace flexlog {

enum class ErrorCode {
  InvalidArgument,
  GimbalDegenerate,
  DimensionMismatch,
  EmptyInput,
  NoNeighbors,
  HeatmapDimMismatch,
  EmptyTarget,
  EmptyRegion,
  PlacementFailure,
  CorruptRecord,
  NonFiniteLoss,
  DegenerateLabels,
  MissingPixelProvenance,
  UnknownTarget,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GimbalDegenerate: return "GimbalDegenerate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NoNeighbors: return "NoNeighbors";
    case ErrorCode::HeatmapDimMismatch: return "HeatmapDimMismatch";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::MissingPixelProvenance: return "MissingPixelProvenance";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace flexlog
