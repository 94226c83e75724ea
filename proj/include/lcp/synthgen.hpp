#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lcp/ingestion.hpp"
#include "lcp/labeling.hpp"

namespace lcp {

enum class TransitionShape { Smoothstep, Linear };

/// Lateral move of one lane width, starting at `start_time`.
struct ScriptedChange {
  double start_time = 0.0;  // s
  Maneuver direction = Maneuver::LLC;
  double duration = 3.0;    // s
};

/// Linear speed ramp: speed changes by `delta_v` over [start_time, start_time + duration].
struct SpeedChange {
  double start_time = 0.0;
  double duration = 1.0;
  double delta_v = 0.0;
};

struct VehicleScript {
  int track_id = 1;
  VehicleClass vehicle_class = VehicleClass::Car;
  double length = 4.5;
  double width = 1.8;
  int start_lane = 0;     // index from the right, 0-based
  double x0 = 0.0;        // position at enter_time
  double v0 = 30.0;
  double enter_time = 0.0;
  std::optional<double> exit_time;  // defaults to the scenario end
  std::vector<SpeedChange> speed_changes;
  std::vector<ScriptedChange> changes;
};

struct ScenarioSpec {
  int recording_id = 1;
  int location_id = 0;
  int lanes = 3;
  double lane_width = 3.75;
  double duration = 60.0;  // s
  double f_s = 25.0;
  DrivingDirection direction = DrivingDirection::Dir1;
  std::optional<double> speed_limit;
  std::vector<Ramp> ramps;
  std::vector<VehicleScript> vehicles;
  TransitionShape shape = TransitionShape::Smoothstep;
  double pos_noise = 0.0;    // m, std of additive Gaussian noise
  double vel_noise = 0.0;    // m/s
  double accel_noise = 0.0;  // m/s^2
  double overlap_tolerance = 0.0;  // m of tolerated body overlap

  /// Lane indices stay on the road, changes fit in the vehicle's lifetime,
  /// noise levels are non-negative.
  void validate() const;
};

ScenarioSpec scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioSpec& s);

struct SyntheticRecording {
  Recording recording;
  /// One event per scripted change. start_frame is the first frame whose
  /// noise-free offset from the departed lane center exceeds the crossing
  /// threshold; end_frame is the first frame strictly inside the target lane.
  std::vector<LaneChangeEvent> truth;
};

/// Deterministic in (spec, seed). InfeasibleScript when two bodies overlap.
SyntheticRecording generate_recording(const ScenarioSpec& spec, std::uint64_t seed,
                                      double crossing_threshold = 0.2);

/// Offset profile of a lane change at normalized time u in [0, 1].
double transition_shape(TransitionShape shape, double u);
/// Smallest u with shape(u) * width = offset (bisection; shapes are monotone).
double transition_inverse(TransitionShape shape, double offset, double width);

/// Knobs for the benchmark scenarios used by the end-to-end checks.
struct BenchmarkOptions {
  int vehicles = 30;
  double duration = 60.0;
  double f_s = 25.0;
  double spacing = 120.0;      // m between vehicles at start
  double speed = 30.0;
  double change_probability = 0.8;
  double min_change_gap = 10.0;  // s between changes of one vehicle
  double first_change = 8.0;     // s
  double transition = 3.0;
  double cue_accel = 1.0;        // m/s^2, sign follows the maneuver
  double cue_lead = 1.0;         // s of cue before the crossing
  double pos_noise = 0.05;
  double vel_noise = 0.02;
  double accel_noise = 0.05;
};

/// Separable traffic: changers speed up (left) or slow down (right) shortly
/// before crossing; everyone else cruises.
ScenarioSpec benchmark_scenario(int recording_id, int location_id, std::uint64_t seed, const BenchmarkOptions& opt);

/// One recording per location id.
std::vector<SyntheticRecording> benchmark_dataset(const std::vector<int>& locations, std::uint64_t seed,
                                                  const BenchmarkOptions& opt);

void write_truth_csv(const std::vector<LaneChangeEvent>& truth, const std::filesystem::path& path);

}  // namespace lcp
