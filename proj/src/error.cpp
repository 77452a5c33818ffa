#include "learntri/error.hpp"

namespace learntri {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateProjection: return "DegenerateProjection";
    case ErrorCode::SingularCamera: return "SingularCamera";
    case ErrorCode::TooFewViews: return "TooFewViews";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DegenerateGradient: return "DegenerateGradient";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::SpecMismatch: return "SpecMismatch";
    case ErrorCode::BadConfidence: return "BadConfidence";
    case ErrorCode::JointOutsideGrid: return "JointOutsideGrid";
    case ErrorCode::DivergedFit: return "DivergedFit";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NoValidJoints: return "NoValidJoints";
    case ErrorCode::PelvisMissing: return "PelvisMissing";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace learntri
