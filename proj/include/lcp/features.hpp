#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcp/ingestion.hpp"
#include "lcp/labeling.hpp"
#include "lcp/trajectory.hpp"

namespace lcp {

inline constexpr double kGapCap = 300.0;        // m, imputed for empty neighbor slots
inline constexpr double kSafetyCap = 300.0;     // DHW/THW/TTC cap when absent
inline constexpr double kCgtCap = 300.0;        // s
inline constexpr double kCgtEpsilon = 1e-6;
inline constexpr double kSpeedFloor = 0.5;      // m/s, every division by speed
inline constexpr double kRampDistanceCap = 1000.0;
inline constexpr double kCurvatureRadiusCap = 10000.0;

struct FeatureDescriptor {
  std::string name;
  std::string unit;
  int category = 1;     // 1..5
  bool raw = false;
  std::array<int, kNumClasses> monotone_hint{};  // per class NLC, LLC, RLC
};

struct FeatureManifest {
  DatasetProfile profile = DatasetProfile::HighD;
  std::string version;
  std::vector<FeatureDescriptor> features;

  std::size_t size() const { return features.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::string> names() const;
  /// FNV-1a over the version and the ordered names.
  std::uint64_t hash() const;
  /// Unique names; 99 columns for highd, 104 for exid.
  void validate() const;
};

FeatureManifest manifest_from_json(const std::string& text);
std::string manifest_to_json(const FeatureManifest& m);
FeatureManifest load_manifest(const std::filesystem::path& path);
FeatureManifest default_manifest(DatasetProfile profile, const std::filesystem::path& data_dir);
std::size_t expected_manifest_size(DatasetProfile profile);

struct SlotStats {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
};

/// Mean and population std; InsufficientData below two values.
SlotStats slot_stats(std::span<const double> values, std::string_view what);

struct NeighborStats {
  std::array<SlotStats, kSlotCount> gap;       // occupied gaps at training event starts
  std::array<SlotStats, kSlotCount> time_gap;  // imputed gap / speed at training anchors
};

/// Gap statistics per slot from occupied gaps observed at event start frames.
std::array<SlotStats, kSlotCount> compute_gap_stats(const std::vector<Recording>& recordings,
                                                    const std::vector<std::vector<std::vector<LaneChangeEvent>>>& events,
                                                    const std::vector<int>& locations);
/// Time-to-gap statistics per slot over the given (training) samples' anchors.
std::array<SlotStats, kSlotCount> compute_time_gap_stats(const std::vector<Recording>& recordings,
                                                         const std::vector<LabeledSample>& samples);

std::string neighbor_stats_to_json(const NeighborStats& s);
NeighborStats neighbor_stats_from_json(const std::string& text);

struct WindowStats {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

WindowStats rolling_stats(std::span<const double> series);

struct LanePosition {
  double offset = 0.0;
  double dist_left = 0.0;   // left boundary minus y
  double dist_right = 0.0;  // right boundary minus y (negative inside the lane)
  double d_offset = 0.0;
  double d_dist_left = 0.0;
  double d_dist_right = 0.0;
  double offset_mean = 0.0;
  double cum_disp = 0.0;
};

/// Lateral position features at the anchor over the trailing `window_frames`.
LanePosition lane_position_features(const ValidatedTrack& track, const LaneGeometry& geometry, std::int64_t anchor,
                                    int window_frames);

struct NeighborInteraction {
  std::array<double, kSlotCount> gap{};
  std::array<double, kSlotCount> dv{};
  std::array<double, kSlotCount> da{};
  std::array<double, kSlotCount> approach{};
  double occupancy = 0.0;
};

NeighborInteraction neighbor_interaction_features(const Frame& frame);

/// Neighbor gap with empty slots imputed to the cap.
double imputed_gap(const NeighborSlot& slot);

struct NormalizedDistance {
  double z = 0.0;
  double s = 0.0;
};

NormalizedDistance normalized_distance(double d, const SlotStats& stats);
int safe_gap_indicator(std::optional<double> d, const SlotStats& stats);
int safe_gap_count(const Frame& frame, const std::array<SlotStats, kSlotCount>& stats);

struct LaneAdvantage {
  double lead = 0.0;
  double rear = 0.0;
  double availability = 0.0;
};

/// side: +1 left, -1 right.
LaneAdvantage lane_advantage(const Frame& frame, int side);
LaneAdvantage lane_advantage(double side_lead, double ego_lead, double side_rear, double ego_rear);

double time_to_gap(double d, double v_ego, double v_floor = kSpeedFloor);
double closing_gap_time(double d, double dv, double eps = kCgtEpsilon, double cap = kCgtCap);

struct SafetyMinima {
  double min_dhw = kSafetyCap;
  double min_thw = kSafetyCap;
  double min_ttc = kSafetyCap;
  bool has_dhw = false;
  bool has_thw = false;
  bool has_ttc = false;
};

SafetyMinima safety_minima(std::span<const Frame> window);

double lane_change_frequency(int completed_changes, double elapsed_minutes);
double speed_ratio(double v, std::optional<double> speed_limit);

struct BehaviorFeatures {
  double is_car = 0.0;
  double is_truck = 0.0;
  double is_other = 0.0;
  double lc_freq = 0.0;  // per minute
  double speed_ratio = 1.0;
  double accel_ratio = 0.0;
};

/// Uses only frames up to the anchor.
BehaviorFeatures behavior_features(const ValidatedTrack& track, const LaneGeometry& geometry,
                                   const DetectionParams& det, double f_s, std::int64_t anchor);

struct RampFeatures {
  double dist_entry = kRampDistanceCap;
  double dist_exit = kRampDistanceCap;
  double eta = kRampDistanceCap / kSpeedFloor;
  double reach_5s = 0.0;
  double reach_15s = 0.0;
  double reach_30s = 0.0;
};

RampFeatures ramp_features(const LaneGeometry& geometry, DrivingDirection direction, const Frame& frame);
/// Reachability from a distance and speed alone.
RampFeatures ramp_reachability(double distance, double v);

/// Resolves manifest names once; computes vectors in manifest order.
class FeatureExtractor {
 public:
  FeatureExtractor(FeatureManifest manifest, NeighborStats stats, SamplingConfig sampling, DetectionParams det);

  const FeatureManifest& manifest() const { return manifest_; }

  std::vector<double> compute(const Recording& rec, const ValidatedTrack& track, std::int64_t anchor) const;

 private:
  FeatureManifest manifest_;
  NeighborStats stats_;
  SamplingConfig sampling_;
  DetectionParams det_;
  std::vector<int> columns_;  // per manifest entry, id in the full feature catalogue
  bool needs_ramps_ = false;
};

/// ManifestMismatch unless values.size() == manifest.size().
void check_manifest_length(const FeatureManifest& manifest, std::size_t actual);

/// Names of every feature the extractor can compute.
const std::vector<std::string>& feature_catalogue();

struct SampleRef {
  int recording_id = 0;
  int track_id = 0;
  int location_id = 0;
  std::int64_t anchor_frame = 0;
};

struct FeatureMatrix {
  std::uint64_t manifest_hash = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;          // row-major
  std::vector<std::uint8_t> labels;   // Maneuver per row
  std::vector<SampleRef> refs;        // empty or one per row
  std::vector<std::string> names;     // column names when known

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  void append_row(std::span<const double> v, std::uint8_t label, const SampleRef* ref);
  /// Copy of the given rows, in order.
  FeatureMatrix subset(std::span<const std::size_t> idx) const;
};

/// Extracts features for every sample (parallel over samples).
FeatureMatrix build_feature_matrix(const std::vector<Recording>& recordings, const std::vector<LabeledSample>& samples,
                                   const FeatureExtractor& extractor);

void write_features_bin(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_features_bin(const std::filesystem::path& path);
void write_features_csv(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_features_csv(const std::filesystem::path& path);
/// Dispatches on extension: .csv is text, anything else binary.
void write_features(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);

}  // namespace lcp
