#include "lcp/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "lcp/csv.hpp"
#include "lcp/error.hpp"

namespace lcp {

std::string_view to_string(Maneuver m) {
  switch (m) {
    case Maneuver::NLC: return "NLC";
    case Maneuver::LLC: return "LLC";
    case Maneuver::RLC: return "RLC";
  }
  return "NLC";
}

Maneuver parse_maneuver(std::string_view s) {
  if (s == "NLC" || s == "0") return Maneuver::NLC;
  if (s == "LLC" || s == "1") return Maneuver::LLC;
  if (s == "RLC" || s == "2") return Maneuver::RLC;
  throw Error(ErrorCode::RowParseError, "unknown label '" + std::string(s) + "'");
}

DetectionParams detection_params_for(DatasetProfile profile) {
  DetectionParams p;
  p.scenario = profile == DatasetProfile::ExiD ? Scenario::Ramp : Scenario::Straight;
  return p;
}

Maneuver direction_highd(int lane_before, int lane_after, HighdLeftRule rule) {
  if (lane_before == lane_after)
    throw Error(ErrorCode::SameLane, "lane id " + std::to_string(lane_before) + " before and after the change");
  const bool increased = lane_before < lane_after;
  const bool left = rule == HighdLeftRule::IdIncreasesLeft ? increased : !increased;
  return left ? Maneuver::LLC : Maneuver::RLC;
}

Maneuver direction_exid(std::span<const Frame> frames, std::int64_t start_frame, double f_s, double window) {
  double sum = 0.0;
  int n = 0;
  for (const auto& f : frames) {
    const double dt = static_cast<double>(f.frame_index - start_frame) / f_s;
    if (dt >= 0.0 && dt < window - 1e-9) {
      sum += f.lat_velocity;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyWindow, "no frames in direction window at frame " + std::to_string(start_frame));
  return sum / n > 0.0 ? Maneuver::LLC : Maneuver::RLC;
}

namespace {

class Detector {
 public:
  Detector(std::span<const Frame> frames, const Track& track, const LaneGeometry& geometry, const DetectionParams& p,
           double f_s)
      : frames_(frames), track_(track), geometry_(geometry), p_(p), f_s_(f_s) {
    drift_n_ = std::max(1, static_cast<int>(std::ceil(p.drift_duration * f_s - 1e-9)));
    quiet_n_ = std::max(1, static_cast<int>(std::lround(p.quiet_duration * f_s)));
    for (const auto& f : frames)
      if (!geometry.lane_at(track.direction, f.y))
        throw Error(ErrorCode::GeometryCoverageError, "track " + std::to_string(track.track_id) + " frame " +
                                                          std::to_string(f.frame_index) + " lies outside known lanes");
    // Centered average of positions, each shifted to frame i by the lateral
    // displacement integrated (trapezoid) from lat_velocity. Truncated at the
    // ends of the available frames.
    const auto n = static_cast<std::ptrdiff_t>(frames.size());
    const std::ptrdiff_t half = std::max(0, p.position_smoothing / 2);
    std::vector<double> disp(frames.size(), 0.0);
    for (std::size_t m = 1; m < frames.size(); ++m)
      disp[m] = disp[m - 1] + 0.5 * (frames[m - 1].lat_velocity + frames[m].lat_velocity) / f_s;
    y_.resize(frames.size());
    lanes_.resize(frames.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto lo = std::max<std::ptrdiff_t>(0, i - half);
      const auto hi = std::min<std::ptrdiff_t>(n - 1, i + half);
      double sum = 0.0;
      for (auto j = lo; j <= hi; ++j) sum += frames[static_cast<std::size_t>(j)].y - disp[static_cast<std::size_t>(j)];
      const auto k = static_cast<std::size_t>(i);
      y_[k] = sum / static_cast<double>(hi - lo + 1) + disp[k];
      lanes_[k] = geometry.lane_at(track.direction, y_[k]);
      if (!lanes_[k]) lanes_[k] = geometry.lane_at(track.direction, frames[k].y);
    }
  }

  std::vector<LaneChangeEvent> run() {
    std::vector<LaneChangeEvent> events;
    const std::size_t n = frames_.size();
    std::size_t k = 0;
    while (k < n) {
      const Lane* home = lanes_[k];
      const double off = y_[k] - home->center;
      const int side = off > 0 ? 1 : -1;
      if (std::abs(off) > p_.crossing_threshold && drift_holds(k, side, *home)) {
        const Lane* target = geometry_.adjacent(track_.direction, home->lane_id, side);
        if (target) {
          if (auto end = find_end(k, side, *home, *target)) {
            LaneChangeEvent e;
            e.track_id = track_.track_id;
            e.start_frame = frames_[k].frame_index;
            e.end_frame = frames_[*end].frame_index;
            e.scenario = p_.scenario;
            e.direction = p_.scenario == Scenario::Straight
                              ? direction_highd(home->lane_id, target->lane_id, p_.highd_left_rule)
                              : direction_exid(frames_, e.start_frame, f_s_, p_.direction_window);
            events.push_back(e);
            // The quiet window after the end holds no reversal, so no new
            // maneuver can start inside it.
            k = *end + quiet_n_ + 1;
            continue;
          }
        }
      }
      ++k;
    }
    return events;
  }

 private:
  // Offset stays beyond the threshold and lateral velocity keeps the departing
  // sign (small excursions tolerated) for the whole drift window.
  bool drift_holds(std::size_t k, int side, const Lane& home) const {
    if (k + drift_n_ > frames_.size()) return false;
    int violations = 0;
    for (std::size_t m = k; m < k + drift_n_; ++m) {
      if (side * (y_[m] - home.center) <= p_.crossing_threshold) return false;
      if (side * frames_[m].lat_velocity < -p_.drift_sign_tolerance) ++violations;
    }
    return violations <= p_.drift_violation_frames;
  }

  // Cumulative lateral motion against the maneuver direction over the quiet
  // window, integrated from lateral velocity. The window is truncated at the
  // last available frame.
  bool quiet_after(std::size_t j, int side) const {
    double against = 0.0;
    const std::size_t last = std::min(frames_.size() - 1, j + quiet_n_);
    for (std::size_t m = j + 1; m <= last; ++m) {
      against += std::max(0.0, -side * frames_[m].lat_velocity) / f_s_;
      if (against > p_.reversal_tolerance) return false;
    }
    return true;
  }

  std::optional<std::size_t> find_end(std::size_t start, int side, const Lane& home, const Lane& target) const {
    for (std::size_t j = start; j < frames_.size(); ++j) {
      const double y = y_[j];
      if (side * (y - home.center) <= 0.0) return std::nullopt;  // fell back past the departed centerline
      if (target.strictly_contains(y) && quiet_after(j, side)) return j;
    }
    return std::nullopt;
  }

  std::span<const Frame> frames_;
  const Track& track_;
  const LaneGeometry& geometry_;
  const DetectionParams& p_;
  double f_s_;
  std::size_t drift_n_ = 13;
  std::size_t quiet_n_ = 25;
  std::vector<double> y_;
  std::vector<const Lane*> lanes_;
};

}  // namespace

std::vector<LaneChangeEvent> detect_events(const ValidatedTrack& track, const LaneGeometry& geometry,
                                           const DetectionParams& params, double f_s) {
  return Detector(track.frames(), track.track(), geometry, params, f_s).run();
}

std::vector<LaneChangeEvent> detect_events_until(const ValidatedTrack& track, const LaneGeometry& geometry,
                                                 const DetectionParams& params, double f_s,
                                                 std::int64_t last_frame) {
  if (last_frame < track.first_frame()) return {};
  const auto count = static_cast<std::size_t>(std::min(last_frame, track.last_frame()) - track.first_frame() + 1);
  return Detector(track.frames().first(count), track.track(), geometry, params, f_s).run();
}

bool has_mixed_directions(const std::vector<LaneChangeEvent>& events, int horizon_frames) {
  for (const auto& a : events) {
    if (a.direction != Maneuver::LLC) continue;
    for (const auto& b : events) {
      if (b.direction != Maneuver::RLC) continue;
      // Both starts fit in some (anchor, anchor + H] interval.
      if (std::llabs(a.start_frame - b.start_frame) < horizon_frames) return true;
    }
  }
  return false;
}

Maneuver label_for_anchor(const std::vector<LaneChangeEvent>& events, std::int64_t anchor, int horizon_frames) {
  const LaneChangeEvent* best = nullptr;
  for (const auto& e : events) {
    if (e.start_frame > anchor && e.start_frame <= anchor + horizon_frames) {
      if (!best || e.start_frame < best->start_frame) best = &e;
    }
  }
  return best ? best->direction : Maneuver::NLC;
}

std::vector<LabeledSample> build_track_samples(const ValidatedTrack& track, const std::vector<LaneChangeEvent>& events,
                                               const SamplingConfig& cfg, int recording_id, int location_id) {
  cfg.validate();
  const int wf = cfg.window_frames();
  const int hf = cfg.horizon_frames();
  std::vector<LabeledSample> out;
  if (has_mixed_directions(events, hf)) return out;
  const std::int64_t first_anchor = track.first_frame() + wf - 1;
  const std::int64_t last_anchor = track.last_frame() - hf;
  for (auto a = first_anchor; a <= last_anchor; a += cfg.stride) {
    LabeledSample s;
    s.recording_id = recording_id;
    s.location_id = location_id;
    s.track_id = track.id();
    s.anchor_frame = a;
    s.label = label_for_anchor(events, a, hf);
    s.history_window = cfg.history_window;
    s.horizon = cfg.horizon;
    out.push_back(s);
  }
  return out;
}

std::vector<LabeledSample> build_samples(const Recording& rec,
                                         const std::vector<std::vector<LaneChangeEvent>>& events_per_track,
                                         const SamplingConfig& cfg) {
  if (events_per_track.size() != rec.tracks.size())
    throw Error(ErrorCode::LengthMismatch, "one event list per track required");
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < rec.tracks.size(); ++i) {
    auto s = build_track_samples(rec.tracks[i], events_per_track[i], cfg, rec.recording_id, rec.location_id);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

void write_samples_csv(const std::vector<LabeledSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "recording_id,track_id,anchor_frame,label,W,T\n";
  for (const auto& s : samples)
    out << s.recording_id << ',' << s.track_id << ',' << s.anchor_frame << ',' << to_string(s.label) << ','
        << csv::format_double(s.history_window) << ',' << csv::format_double(s.horizon) << '\n';
}

std::vector<LabeledSample> read_samples_csv(const std::filesystem::path& path,
                                            const std::vector<Recording>& recordings) {
  std::map<int, int> location_of;
  for (const auto& r : recordings) location_of[r.recording_id] = r.location_id;
  csv::Reader reader(path);
  std::vector<std::size_t> cols;
  for (const char* name : {"recording_id", "track_id", "anchor_frame", "label", "W", "T"}) {
    auto c = reader.column(name);
    if (!c) throw Error(ErrorCode::MissingColumn, path.string() + " lacks column '" + name + "'", {name});
    cols.push_back(*c);
  }
  std::vector<LabeledSample> out;
  std::vector<std::string_view> row;
  while (reader.next(row)) {
    auto bad = [&] {
      return Error(ErrorCode::RowParseError, path.string() + " line " + std::to_string(reader.line()),
                   {std::to_string(reader.line())});
    };
    if (row.size() < 6) throw bad();
    LabeledSample s;
    auto rid = csv::parse_int(row[cols[0]]);
    auto tid = csv::parse_int(row[cols[1]]);
    auto anchor = csv::parse_int(row[cols[2]]);
    auto w = csv::parse_double(row[cols[4]]);
    auto t = csv::parse_double(row[cols[5]]);
    if (!rid || !tid || !anchor || !w || !t) throw bad();
    s.recording_id = static_cast<int>(*rid);
    s.track_id = static_cast<int>(*tid);
    s.anchor_frame = *anchor;
    s.label = parse_maneuver(row[cols[3]]);
    s.history_window = *w;
    s.horizon = *t;
    auto loc = location_of.find(s.recording_id);
    s.location_id = loc == location_of.end() ? -1 : loc->second;
    out.push_back(s);
  }
  return out;
}

}  // namespace lcp
