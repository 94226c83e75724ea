#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lcp {

enum class ErrorCode {
  // trajectory model
  EmptyTrack,
  NonMonotoneFrames,
  ExcessiveGaps,
  // ingestion
  MissingColumn,
  UnitError,
  RowParseError,
  InconsistentMeta,
  OverlappingLanes,
  FewerThanTwoBoundaries,
  // labeling
  GeometryCoverageError,
  SameLane,
  EmptyWindow,
  // features
  InsufficientData,
  EmptySeries,
  UnknownLane,
  DegenerateStats,
  NoRampGeometry,
  ManifestMismatch,
  UnknownFeature,
  // imbalance
  TooFewMinoritySamples,
  EmptyClass,
  DegenerateValidation,
  InvalidSimplex,
  // gbdt
  NonFiniteScore,
  EmptyClassInTraining,
  InvalidParams,
  // eval
  EmptyPartition,
  OverlappingSplit,
  TooFewGroups,
  LengthMismatch,
  MisalignedSequences,
  // synthgen
  InfeasibleScript,
  // cli / io
  InvalidConfig,
  HashMismatch,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `details` carries structured payload where an
/// error names several items (gap spans, offending columns).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> details = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace lcp
