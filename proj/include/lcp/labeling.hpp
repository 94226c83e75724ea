#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lcp/ingestion.hpp"
#include "lcp/trajectory.hpp"

namespace lcp {

enum class Maneuver : std::uint8_t { NLC = 0, LLC = 1, RLC = 2 };
inline constexpr int kNumClasses = 3;

std::string_view to_string(Maneuver m);
Maneuver parse_maneuver(std::string_view s);

enum class Scenario : std::uint8_t { Straight, Ramp };

struct LaneChangeEvent {
  int track_id = 0;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;
  Maneuver direction = Maneuver::LLC;
  Scenario scenario = Scenario::Straight;
};

/// How highD-style lane ids relate to the left side. The default reads
/// "id before < id after" as a left change.
enum class HighdLeftRule : std::uint8_t { IdIncreasesLeft, IdDecreasesLeft };

struct DetectionParams {
  double crossing_threshold = 0.2;   // m from the departed lane's centerline
  double drift_duration = 0.5;       // s of one-signed lateral velocity after the crossing
  double drift_sign_tolerance = 0.02;  // m/s of opposite-sign velocity tolerated ...
  int drift_violation_frames = 1;      // ... for at most this many frames
  double quiet_duration = 1.0;       // s without reversal after entering the target lane
  double reversal_tolerance = 0.1;   // m of cumulative opposite lateral displacement
  double direction_window = 0.1;     // s averaged for the lateral-velocity direction rule
  int position_smoothing = 11;       // frames of velocity-aligned position averaging for the offset tests (1 = raw)
  Scenario scenario = Scenario::Straight;
  HighdLeftRule highd_left_rule = HighdLeftRule::IdIncreasesLeft;
};

DetectionParams detection_params_for(DatasetProfile profile);

std::vector<LaneChangeEvent> detect_events(const ValidatedTrack& track, const LaneGeometry& geometry,
                                           const DetectionParams& params, double f_s);

/// Same detection restricted to frames up to and including `last_frame`;
/// never reads later frames.
std::vector<LaneChangeEvent> detect_events_until(const ValidatedTrack& track, const LaneGeometry& geometry,
                                                 const DetectionParams& params, double f_s,
                                                 std::int64_t last_frame);

Maneuver direction_highd(int lane_before, int lane_after, HighdLeftRule rule = HighdLeftRule::IdIncreasesLeft);
/// Mean lateral velocity over [t_start, t_start + window): > 0 is a left change.
Maneuver direction_exid(std::span<const Frame> frames, std::int64_t start_frame, double f_s, double window = 0.1);

struct LabeledSample {
  int recording_id = 0;
  int location_id = 0;
  int track_id = 0;
  std::int64_t anchor_frame = 0;  // last frame of the history window
  Maneuver label = Maneuver::NLC;
  double history_window = 1.0;
  double horizon = 1.0;
};

/// True when the track has both a left and a right change starting within a
/// single horizon-length interval.
bool has_mixed_directions(const std::vector<LaneChangeEvent>& events, int horizon_frames);

std::vector<LabeledSample> build_track_samples(const ValidatedTrack& track, const std::vector<LaneChangeEvent>& events,
                                               const SamplingConfig& cfg, int recording_id, int location_id);

std::vector<LabeledSample> build_samples(const Recording& rec,
                                         const std::vector<std::vector<LaneChangeEvent>>& events_per_track,
                                         const SamplingConfig& cfg);

/// Label for one anchor as a pure function of the events.
Maneuver label_for_anchor(const std::vector<LaneChangeEvent>& events, std::int64_t anchor, int horizon_frames);

void write_samples_csv(const std::vector<LabeledSample>& samples, const std::filesystem::path& path);
std::vector<LabeledSample> read_samples_csv(const std::filesystem::path& path,
                                            const std::vector<Recording>& recordings);

}  // namespace lcp
