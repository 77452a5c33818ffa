#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace learntri {

enum class ErrorCode {
  InvalidArgument,
  DegenerateProjection,
  SingularCamera,
  TooFewViews,
  DegenerateGeometry,
  PointAtInfinity,
  DegenerateGradient,
  NoConsensus,
  SpecMismatch,
  BadConfidence,
  JointOutsideGrid,
  DivergedFit,
  EmptyDataset,
  NoValidJoints,
  PelvisMissing,
  ParseError,
  IoError,
};

/// Stable identifier used in diagnostics and JSON reason codes.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace learntri
