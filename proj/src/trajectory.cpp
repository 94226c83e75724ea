#include "lcp/trajectory.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "lcp/error.hpp"

namespace lcp {

std::string_view slot_name(Slot s) {
  switch (s) {
    case Slot::EgoLead: return "ego_lead";
    case Slot::EgoRear: return "ego_rear";
    case Slot::LeftLead: return "left_lead";
    case Slot::LeftRear: return "left_rear";
    case Slot::RightLead: return "right_lead";
    case Slot::RightRear: return "right_rear";
  }
  return "?";
}

int NeighborSet::occupied_count() const {
  int n = 0;
  for (const auto& s : slots) n += s.occupied() ? 1 : 0;
  return n;
}

double Frame::speed() const { return std::hypot(vx, vy); }

std::string_view to_string(VehicleClass c) {
  switch (c) {
    case VehicleClass::Car: return "car";
    case VehicleClass::Truck: return "truck";
    case VehicleClass::Other: return "other";
  }
  return "other";
}

VehicleClass parse_vehicle_class(std::string_view s) {
  std::string lower(s);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "car") return VehicleClass::Car;
  if (lower == "truck" || lower == "bus" || lower == "truck_bus") return VehicleClass::Truck;
  return VehicleClass::Other;
}

const std::vector<Lane>& LaneGeometry::lanes_for(DrivingDirection d) const {
  static const std::vector<Lane> empty;
  auto it = lanes.find(d);
  return it == lanes.end() ? empty : it->second;
}

const Lane* LaneGeometry::find_lane(DrivingDirection d, int lane_id) const {
  for (const auto& lane : lanes_for(d))
    if (lane.lane_id == lane_id) return &lane;
  return nullptr;
}

const Lane* LaneGeometry::lane_at(DrivingDirection d, double y) const {
  for (const auto& lane : lanes_for(d))
    if (lane.contains(y)) return &lane;
  return nullptr;
}

const Lane* LaneGeometry::adjacent(DrivingDirection d, int lane_id, int side) const {
  const auto& v = lanes_for(d);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].lane_id != lane_id) continue;
    if (side > 0) return i + 1 < v.size() ? &v[i + 1] : nullptr;
    return i > 0 ? &v[i - 1] : nullptr;
  }
  return nullptr;
}

int SamplingConfig::window_frames() const { return static_cast<int>(std::lround(history_window * f_s)); }
int SamplingConfig::horizon_frames() const { return static_cast<int>(std::lround(horizon * f_s)); }

void SamplingConfig::validate() const {
  if (!(f_s > 0) || !(history_window > 0) || !(horizon > 0) || stride < 1 || window_frames() < 1 ||
      horizon_frames() < 1)
    throw Error(ErrorCode::InvalidConfig, "sampling config requires f_s, W, T > 0 and stride >= 1");
}

namespace {

std::optional<double> lerp_opt(const std::optional<double>& a, const std::optional<double>& b, double u) {
  if (a && b) return *a + u * (*b - *a);
  return std::nullopt;
}

Frame interpolate(const Frame& a, const Frame& b, std::int64_t idx) {
  const double u = static_cast<double>(idx - a.frame_index) / static_cast<double>(b.frame_index - a.frame_index);
  auto lerp = [u](double p, double q) { return p + u * (q - p); };
  Frame f = a;
  f.frame_index = idx;
  f.x = lerp(a.x, b.x);
  f.y = lerp(a.y, b.y);
  f.vx = lerp(a.vx, b.vx);
  f.vy = lerp(a.vy, b.vy);
  f.ax = lerp(a.ax, b.ax);
  f.ay = lerp(a.ay, b.ay);
  f.lat_velocity = lerp(a.lat_velocity, b.lat_velocity);
  f.heading = lerp(a.heading, b.heading);
  f.yaw_rate = lerp(a.yaw_rate, b.yaw_rate);
  f.lateral_offset = lerp(a.lateral_offset, b.lateral_offset);
  f.dhw = lerp_opt(a.dhw, b.dhw, u);
  f.thw = lerp_opt(a.thw, b.thw, u);
  f.ttc = lerp_opt(a.ttc, b.ttc, u);
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const auto& sa = a.neighbors.slots[s];
    const auto& sb = b.neighbors.slots[s];
    auto& out = f.neighbors.slots[s];
    if (sa.occupied() && sb.occupied() && sa.track_id == sb.track_id) {
      out.gap = lerp(sa.gap, sb.gap);
      out.delta_v = lerp(sa.delta_v, sb.delta_v);
      out.delta_a = lerp(sa.delta_a, sb.delta_a);
    }
  }
  return f;
}

}  // namespace

ValidatedTrack validate_track(Track track, double f_s) {
  if (track.frames.empty()) throw Error(ErrorCode::EmptyTrack, "track " + std::to_string(track.track_id));
  for (std::size_t i = 1; i < track.frames.size(); ++i) {
    if (track.frames[i].frame_index <= track.frames[i - 1].frame_index)
      throw Error(ErrorCode::NonMonotoneFrames,
                  "track " + std::to_string(track.track_id) + " at frame " +
                      std::to_string(track.frames[i].frame_index));
  }

  std::vector<std::string> spans;
  for (std::size_t i = 1; i < track.frames.size(); ++i) {
    const auto prev = track.frames[i - 1].frame_index;
    const auto cur = track.frames[i].frame_index;
    if (cur - prev - 1 > 2) spans.push_back(std::to_string(prev + 1) + "-" + std::to_string(cur - 1));
  }
  if (!spans.empty()) {
    std::string msg = "track " + std::to_string(track.track_id) + " missing frames";
    for (const auto& s : spans) msg += " " + s;
    throw Error(ErrorCode::ExcessiveGaps, msg, spans);
  }

  std::vector<Frame> out;
  std::vector<std::int64_t> interpolated;
  out.reserve(track.frames.size() + 4);
  for (std::size_t i = 0; i < track.frames.size(); ++i) {
    if (i > 0) {
      const Frame& a = track.frames[i - 1];
      const Frame& b = track.frames[i];
      for (auto idx = a.frame_index + 1; idx < b.frame_index; ++idx) {
        out.push_back(interpolate(a, b, idx));
        interpolated.push_back(idx);
      }
    }
    out.push_back(track.frames[i]);
  }
  for (auto& f : out) f.t = static_cast<double>(f.frame_index) / f_s;
  track.frames = std::move(out);
  return ValidatedTrack(std::move(track), std::move(interpolated));
}

void assign_lateral_offsets(ValidatedTrack& track, const LaneGeometry& geometry) {
  const auto dir = track.track().direction;
  for (auto& f : TrackEditor::frames(track)) {
    const Lane* lane = f.lane_id ? geometry.find_lane(dir, *f.lane_id) : nullptr;
    if (!lane) lane = geometry.lane_at(dir, f.y);
    f.lateral_offset = lane ? f.y - lane->center : 0.0;
  }
}

}  // namespace lcp
