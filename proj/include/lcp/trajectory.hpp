#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace lcp {

// Internal coordinates are road-aligned per driving direction: x grows in the
// direction of travel, y grows to the driver's left. Adapters normalize raw
// dataset conventions into this frame.

enum class Slot : std::uint8_t { EgoLead = 0, EgoRear, LeftLead, LeftRear, RightLead, RightRear };
inline constexpr std::size_t kSlotCount = 6;
inline constexpr std::array<Slot, kSlotCount> kAllSlots = {Slot::EgoLead,  Slot::EgoRear,   Slot::LeftLead,
                                                           Slot::LeftRear, Slot::RightLead, Slot::RightRear};

std::string_view slot_name(Slot s);
constexpr std::size_t index(Slot s) { return static_cast<std::size_t>(s); }
constexpr bool is_lead(Slot s) { return s == Slot::EgoLead || s == Slot::LeftLead || s == Slot::RightLead; }

/// One neighbor reference. delta_v = v_neighbor - v_ego, delta_a likewise.
struct NeighborSlot {
  std::optional<int> track_id;
  double gap = 0.0;  // bumper-to-bumper longitudinal distance, m
  double delta_v = 0.0;
  double delta_a = 0.0;

  bool occupied() const { return track_id.has_value(); }
};

struct NeighborSet {
  std::array<NeighborSlot, kSlotCount> slots{};

  NeighborSlot& operator[](Slot s) { return slots[index(s)]; }
  const NeighborSlot& operator[](Slot s) const { return slots[index(s)]; }
  int occupied_count() const;
};

struct Frame {
  std::int64_t frame_index = 0;
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double ax = 0.0;
  double ay = 0.0;
  double lat_velocity = 0.0;  // positive = leftward
  std::optional<int> lane_id;
  double lateral_offset = 0.0;  // y minus current lane centerline; derived from geometry
  double heading = 0.0;
  double yaw_rate = 0.0;
  std::optional<double> dhw;
  std::optional<double> thw;
  std::optional<double> ttc;
  NeighborSet neighbors;

  double speed() const;
};

enum class DrivingDirection : std::uint8_t { Dir1 = 1, Dir2 = 2 };
enum class VehicleClass : std::uint8_t { Car, Truck, Other };

std::string_view to_string(VehicleClass c);
VehicleClass parse_vehicle_class(std::string_view s);

struct Track {
  int track_id = 0;
  int location_id = 0;
  DrivingDirection direction = DrivingDirection::Dir2;
  VehicleClass vehicle_class = VehicleClass::Car;
  double length = 4.5;  // m, along x
  double width = 1.8;   // m, along y
  std::optional<double> speed_limit;  // m/s
  std::vector<Frame> frames;
};

/// A track whose frame indices are strictly consecutive. Only validate_track
/// produces one, so holders can rely on index arithmetic.
class ValidatedTrack {
 public:
  const Track& track() const { return track_; }
  int id() const { return track_.track_id; }
  std::span<const Frame> frames() const { return track_.frames; }
  std::int64_t first_frame() const { return track_.frames.front().frame_index; }
  std::int64_t last_frame() const { return track_.frames.back().frame_index; }
  /// Frame at absolute index; caller guarantees first_frame() <= f <= last_frame().
  const Frame& at(std::int64_t f) const { return track_.frames[static_cast<std::size_t>(f - first_frame())]; }
  bool contains(std::int64_t f) const { return f >= first_frame() && f <= last_frame(); }
  const std::vector<std::int64_t>& interpolated_frames() const { return interpolated_; }

 private:
  friend ValidatedTrack validate_track(Track track, double f_s);
  friend class TrackEditor;
  ValidatedTrack(Track t, std::vector<std::int64_t> interp) : track_(std::move(t)), interpolated_(std::move(interp)) {}

  Track track_;
  std::vector<std::int64_t> interpolated_;
};

/// Mutating access for adapters that need to attach derived per-frame values
/// (lateral offset, neighbor gaps) after validation. Frame indices stay fixed.
class TrackEditor {
 public:
  static std::vector<Frame>& frames(ValidatedTrack& t) { return t.track_.frames; }
};

struct Lane {
  int lane_id = 0;
  double center = 0.0;
  double left = 0.0;   // larger y
  double right = 0.0;  // smaller y

  double width() const { return left - right; }
  bool contains(double y) const { return y >= right && y <= left; }
  bool strictly_contains(double y) const { return y > right && y < left; }
};

enum class RampKind : std::uint8_t { Entry, Exit };

struct Ramp {
  RampKind kind = RampKind::Entry;
  DrivingDirection direction = DrivingDirection::Dir2;
  double station = 0.0;  // longitudinal position, m, in the direction's road-aligned frame
};

/// Per driving direction, lanes ordered right to left (ascending y).
struct LaneGeometry {
  std::map<DrivingDirection, std::vector<Lane>> lanes;
  std::vector<Ramp> ramps;

  const std::vector<Lane>& lanes_for(DrivingDirection d) const;
  const Lane* find_lane(DrivingDirection d, int lane_id) const;
  /// Lane whose [right, left] interval contains y; nullptr outside the road.
  const Lane* lane_at(DrivingDirection d, double y) const;
  /// Neighbor lane on the given side (+1 left, -1 right) of the lane with `lane_id`.
  const Lane* adjacent(DrivingDirection d, int lane_id, int side) const;
};

struct SamplingConfig {
  double f_s = 25.0;
  double history_window = 1.0;  // W, s
  double horizon = 1.0;         // T, s
  int stride = 5;

  int window_frames() const;
  int horizon_frames() const;
  void validate() const;
};

/// Rejects tracks with gaps over two frames, interpolates 1-2 frame gaps and
/// records them, and recomputes t from frame_index.
ValidatedTrack validate_track(Track track, double f_s);

/// Fills Frame::lateral_offset from lane_id (falling back to position).
void assign_lateral_offsets(ValidatedTrack& track, const LaneGeometry& geometry);

}  // namespace lcp
