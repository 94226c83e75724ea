#include "lcp/error.hpp"

namespace lcp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::NonMonotoneFrames: return "NonMonotoneFrames";
    case ErrorCode::ExcessiveGaps: return "ExcessiveGaps";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnitError: return "UnitError";
    case ErrorCode::RowParseError: return "RowParseError";
    case ErrorCode::InconsistentMeta: return "InconsistentMeta";
    case ErrorCode::OverlappingLanes: return "OverlappingLanes";
    case ErrorCode::FewerThanTwoBoundaries: return "FewerThanTwoBoundaries";
    case ErrorCode::GeometryCoverageError: return "GeometryCoverageError";
    case ErrorCode::SameLane: return "SameLane";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::UnknownLane: return "UnknownLane";
    case ErrorCode::DegenerateStats: return "DegenerateStats";
    case ErrorCode::NoRampGeometry: return "NoRampGeometry";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::TooFewMinoritySamples: return "TooFewMinoritySamples";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DegenerateValidation: return "DegenerateValidation";
    case ErrorCode::InvalidSimplex: return "InvalidSimplex";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::EmptyClassInTraining: return "EmptyClassInTraining";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::EmptyPartition: return "EmptyPartition";
    case ErrorCode::OverlappingSplit: return "OverlappingSplit";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MisalignedSequences: return "MisalignedSequences";
    case ErrorCode::InfeasibleScript: return "InfeasibleScript";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace lcp
