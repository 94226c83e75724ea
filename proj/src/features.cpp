#include "lcp/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "lcp/csv.hpp"
#include "lcp/error.hpp"
#include "lcp/io.hpp"
#include "lcp/random.hpp"

namespace lcp {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::optional<std::size_t> FeatureManifest::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return i;
  return std::nullopt;
}

std::vector<std::string> FeatureManifest::names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::uint64_t FeatureManifest::hash() const {
  std::uint64_t h = fnv1a64(version);
  for (const auto& f : features) {
    h = fnv1a64("\n", h);
    h = fnv1a64(f.name, h);
  }
  return h;
}

std::size_t expected_manifest_size(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::HighD: return 99;
    case DatasetProfile::ExiD: return 104;
    case DatasetProfile::Custom: return 0;
  }
  return 0;
}

void FeatureManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (!seen.insert(f.name).second) throw Error(ErrorCode::InvalidConfig, "duplicate feature '" + f.name + "'");
    if (f.category < 1 || f.category > 5)
      throw Error(ErrorCode::InvalidConfig, "feature '" + f.name + "' has category outside 1-5");
  }
  const std::size_t expected = expected_manifest_size(profile);
  if (expected != 0 && features.size() != expected)
    throw Error(ErrorCode::ManifestMismatch,
                "manifest for " + std::string(to_string(profile)) + " must list " + std::to_string(expected) +
                    " features, found " + std::to_string(features.size()),
                {std::to_string(expected), std::to_string(features.size())});
}

FeatureManifest manifest_from_json(const std::string& text) {
  const json j = json::parse(text);
  FeatureManifest m;
  m.profile = parse_profile(j.at("profile").get<std::string>());
  m.version = j.at("version").get<std::string>();
  for (const auto& fj : j.at("features")) {
    FeatureDescriptor d;
    d.name = fj.at("name").get<std::string>();
    d.unit = fj.value("unit", "");
    d.category = fj.at("category").get<int>();
    d.raw = fj.value("raw", false);
    if (fj.contains("monotone")) {
      const auto& mj = fj.at("monotone");
      for (int c = 0; c < kNumClasses; ++c) {
        const auto key = std::string(to_string(static_cast<Maneuver>(c)));
        if (mj.contains(key)) d.monotone_hint[c] = mj.at(key).get<int>();
      }
    }
    m.features.push_back(std::move(d));
  }
  m.validate();
  return m;
}

std::string manifest_to_json(const FeatureManifest& m) {
  json j;
  j["profile"] = std::string(to_string(m.profile));
  j["version"] = m.version;
  json arr = json::array();
  for (const auto& f : m.features) {
    json fj = {{"name", f.name}, {"unit", f.unit}, {"category", f.category}, {"raw", f.raw}};
    json mono = json::object();
    for (int c = 0; c < kNumClasses; ++c)
      if (f.monotone_hint[c] != 0) mono[std::string(to_string(static_cast<Maneuver>(c)))] = f.monotone_hint[c];
    if (!mono.empty()) fj["monotone"] = mono;
    arr.push_back(fj);
  }
  j["features"] = arr;
  return j.dump(2);
}

FeatureManifest load_manifest(const std::filesystem::path& path) { return manifest_from_json(read_text_file(path)); }

FeatureManifest default_manifest(DatasetProfile profile, const std::filesystem::path& data_dir) {
  return load_manifest(data_dir / "manifests" / (std::string(to_string(profile)) + ".json"));
}

void check_manifest_length(const FeatureManifest& manifest, std::size_t actual) {
  if (actual != manifest.size())
    throw Error(ErrorCode::ManifestMismatch,
                "expected " + std::to_string(manifest.size()) + " values, got " + std::to_string(actual),
                {std::to_string(manifest.size()), std::to_string(actual)});
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

SlotStats slot_stats(std::span<const double> values, std::string_view what) {
  if (values.size() < 2)
    throw Error(ErrorCode::InsufficientData,
                std::string(what) + " has " + std::to_string(values.size()) + " observations, need 2",
                {std::string(what)});
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size())), values.size()};
}

std::array<SlotStats, kSlotCount> compute_gap_stats(const std::vector<Recording>& recordings,
                                                    const std::vector<std::vector<std::vector<LaneChangeEvent>>>& events,
                                                    const std::vector<int>& locations) {
  if (events.size() != recordings.size()) throw Error(ErrorCode::LengthMismatch, "one event table per recording");
  std::array<std::vector<double>, kSlotCount> gaps;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const auto& rec = recordings[r];
    if (std::find(locations.begin(), locations.end(), rec.location_id) == locations.end()) continue;
    if (events[r].size() != rec.tracks.size()) throw Error(ErrorCode::LengthMismatch, "one event list per track");
    for (std::size_t t = 0; t < rec.tracks.size(); ++t) {
      const auto& track = rec.tracks[t];
      for (const auto& e : events[r][t]) {
        if (!track.contains(e.start_frame)) continue;
        const auto& f = track.at(e.start_frame);
        for (std::size_t s = 0; s < kSlotCount; ++s)
          if (f.neighbors.slots[s].occupied()) gaps[s].push_back(f.neighbors.slots[s].gap);
      }
    }
  }
  std::array<SlotStats, kSlotCount> out;
  for (std::size_t s = 0; s < kSlotCount; ++s) out[s] = slot_stats(gaps[s], slot_name(kAllSlots[s]));
  return out;
}

double imputed_gap(const NeighborSlot& slot) { return slot.occupied() ? slot.gap : kGapCap; }

std::array<SlotStats, kSlotCount> compute_time_gap_stats(const std::vector<Recording>& recordings,
                                                         const std::vector<LabeledSample>& samples) {
  std::unordered_map<int, const Recording*> by_id;
  for (const auto& r : recordings) by_id[r.recording_id] = &r;
  std::array<std::vector<double>, kSlotCount> tg;
  for (const auto& s : samples) {
    auto it = by_id.find(s.recording_id);
    if (it == by_id.end()) continue;
    const auto* track = it->second->find(s.track_id);
    if (!track || !track->contains(s.anchor_frame)) continue;
    const auto& f = track->at(s.anchor_frame);
    for (std::size_t k = 0; k < kSlotCount; ++k)
      tg[k].push_back(time_to_gap(imputed_gap(f.neighbors.slots[k]), f.speed()));
  }
  std::array<SlotStats, kSlotCount> out;
  for (std::size_t k = 0; k < kSlotCount; ++k)
    out[k] = slot_stats(tg[k], "time gap " + std::string(slot_name(kAllSlots[k])));
  return out;
}

namespace {

json slot_stats_json(const std::array<SlotStats, kSlotCount>& a) {
  json j = json::object();
  for (std::size_t s = 0; s < kSlotCount; ++s)
    j[std::string(slot_name(kAllSlots[s]))] = {{"mean", a[s].mean}, {"std", a[s].std}, {"count", a[s].count}};
  return j;
}

std::array<SlotStats, kSlotCount> slot_stats_from(const json& j) {
  std::array<SlotStats, kSlotCount> a;
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const auto& e = j.at(std::string(slot_name(kAllSlots[s])));
    a[s] = {e.at("mean").get<double>(), e.at("std").get<double>(), e.at("count").get<std::size_t>()};
  }
  return a;
}

}  // namespace

std::string neighbor_stats_to_json(const NeighborStats& s) {
  json j;
  j["gap"] = slot_stats_json(s.gap);
  j["time_gap"] = slot_stats_json(s.time_gap);
  return j.dump(2);
}

NeighborStats neighbor_stats_from_json(const std::string& text) {
  const json j = json::parse(text);
  return {slot_stats_from(j.at("gap")), slot_stats_from(j.at("time_gap"))};
}

// ---------------------------------------------------------------------------
// Feature primitives
// ---------------------------------------------------------------------------

WindowStats rolling_stats(std::span<const double> series) {
  if (series.empty()) throw Error(ErrorCode::EmptySeries, "rolling statistics over an empty window");
  WindowStats w;
  w.min = w.max = series.front();
  double sum = 0.0;
  for (double v : series) {
    sum += v;
    w.min = std::min(w.min, v);
    w.max = std::max(w.max, v);
  }
  w.mean = sum / static_cast<double>(series.size());
  double ss = 0.0;
  for (double v : series) ss += (v - w.mean) * (v - w.mean);
  w.std = std::sqrt(ss / static_cast<double>(series.size()));
  // Keep min <= mean <= max under rounding.
  w.mean = std::clamp(w.mean, w.min, w.max);
  return w;
}

LanePosition lane_position_features(const ValidatedTrack& track, const LaneGeometry& geometry, std::int64_t anchor,
                                    int window_frames) {
  const auto& f = track.at(anchor);
  const Lane* lane = f.lane_id ? geometry.find_lane(track.track().direction, *f.lane_id) : nullptr;
  if (!lane)
    throw Error(ErrorCode::UnknownLane, "track " + std::to_string(track.id()) + " has no known lane at frame " +
                                            std::to_string(anchor));
  LanePosition p;
  p.offset = f.y - lane->center;
  p.dist_left = lane->left - f.y;
  p.dist_right = lane->right - f.y;
  if (anchor > track.first_frame()) {
    const double dy = f.y - track.at(anchor - 1).y;
    p.d_offset = dy;
    p.d_dist_left = -dy;
    p.d_dist_right = -dy;
  }
  const std::int64_t from = std::max(track.first_frame(), anchor - window_frames + 1);
  double sum = 0.0;
  for (auto k = from; k <= anchor; ++k) {
    sum += track.at(k).y;
    if (k > from) p.cum_disp += std::abs(track.at(k).y - track.at(k - 1).y);
  }
  p.offset_mean = sum / static_cast<double>(anchor - from + 1) - lane->center;
  return p;
}

NeighborInteraction neighbor_interaction_features(const Frame& frame) {
  NeighborInteraction n;
  int occupied = 0;
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const auto& slot = frame.neighbors.slots[s];
    n.gap[s] = imputed_gap(slot);
    if (!slot.occupied()) continue;
    ++occupied;
    n.dv[s] = slot.delta_v;
    n.da[s] = slot.delta_a;
    // A slower leader or a faster follower closes the gap.
    n.approach[s] = is_lead(kAllSlots[s]) ? std::max(0.0, -slot.delta_v) : std::max(0.0, slot.delta_v);
  }
  n.occupancy = occupied / static_cast<double>(kSlotCount);
  return n;
}

NormalizedDistance normalized_distance(double d, const SlotStats& stats) {
  if (stats.std == 0.0 || stats.mean == 0.0)
    throw Error(ErrorCode::DegenerateStats, "gap statistics with zero mean or spread");
  return {(d - stats.mean) / stats.std, d / stats.mean};
}

int safe_gap_indicator(std::optional<double> d, const SlotStats& stats) {
  if (!d) return 1;
  return *d > stats.mean + 2.0 * stats.std ? 1 : 0;
}

int safe_gap_count(const Frame& frame, const std::array<SlotStats, kSlotCount>& stats) {
  int n = 0;
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const auto& slot = frame.neighbors.slots[s];
    n += safe_gap_indicator(slot.occupied() ? std::optional<double>(slot.gap) : std::nullopt, stats[s]);
  }
  return n;
}

LaneAdvantage lane_advantage(double side_lead, double ego_lead, double side_rear, double ego_rear) {
  LaneAdvantage a;
  a.lead = side_lead - ego_lead;
  a.rear = side_rear - ego_rear;
  a.availability = std::min(a.lead, a.rear);
  return a;
}

LaneAdvantage lane_advantage(const Frame& frame, int side) {
  const auto& n = frame.neighbors;
  const Slot lead = side > 0 ? Slot::LeftLead : Slot::RightLead;
  const Slot rear = side > 0 ? Slot::LeftRear : Slot::RightRear;
  return lane_advantage(imputed_gap(n[lead]), imputed_gap(n[Slot::EgoLead]), imputed_gap(n[rear]),
                        imputed_gap(n[Slot::EgoRear]));
}

double time_to_gap(double d, double v_ego, double v_floor) { return d / std::max(v_ego, v_floor); }

double closing_gap_time(double d, double dv, double eps, double cap) { return std::min(d / (std::abs(dv) + eps), cap); }

SafetyMinima safety_minima(std::span<const Frame> window) {
  if (window.empty()) throw Error(ErrorCode::EmptySeries, "safety minima over an empty window");
  SafetyMinima m;
  for (const auto& f : window) {
    if (f.dhw) {
      m.min_dhw = std::min(m.min_dhw, *f.dhw);
      m.has_dhw = true;
    }
    if (f.thw) {
      m.min_thw = std::min(m.min_thw, *f.thw);
      m.has_thw = true;
    }
    if (f.ttc) {
      m.min_ttc = std::min(m.min_ttc, *f.ttc);
      m.has_ttc = true;
    }
  }
  return m;
}

double lane_change_frequency(int completed_changes, double elapsed_minutes) {
  return elapsed_minutes > 0.0 ? completed_changes / elapsed_minutes : 0.0;
}

double speed_ratio(double v, std::optional<double> speed_limit) {
  return speed_limit && *speed_limit > 0.0 ? v / *speed_limit : 1.0;
}

BehaviorFeatures behavior_features(const ValidatedTrack& track, const LaneGeometry& geometry,
                                   const DetectionParams& det, double f_s, std::int64_t anchor) {
  const auto& t = track.track();
  const auto& f = track.at(anchor);
  BehaviorFeatures b;
  b.is_car = t.vehicle_class == VehicleClass::Car;
  b.is_truck = t.vehicle_class == VehicleClass::Truck;
  b.is_other = t.vehicle_class == VehicleClass::Other;

  const auto quiet = static_cast<std::int64_t>(std::lround(det.quiet_duration * f_s));
  int completed = 0;
  for (const auto& e : detect_events_until(track, geometry, det, f_s, anchor))
    if (e.end_frame + quiet <= anchor) ++completed;
  const double minutes = static_cast<double>(anchor - track.first_frame()) / f_s / 60.0;
  b.lc_freq = lane_change_frequency(completed, minutes);
  b.speed_ratio = speed_ratio(f.speed(), t.speed_limit);

  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(anchor - track.first_frame() + 1));
  for (auto k = track.first_frame(); k <= anchor; ++k) mags.push_back(std::abs(track.at(k).ax));
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(mags.size()))) - 1;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(rank), mags.end());
  b.accel_ratio = f.ax / std::max(mags[rank], 0.1);
  return b;
}

RampFeatures ramp_reachability(double distance, double v) {
  RampFeatures r;
  r.eta = distance / std::max(v, kSpeedFloor);
  r.reach_5s = r.eta <= 5.0;
  r.reach_15s = r.eta <= 15.0;
  r.reach_30s = r.eta <= 30.0;
  return r;
}

RampFeatures ramp_features(const LaneGeometry& geometry, DrivingDirection direction, const Frame& frame) {
  if (geometry.ramps.empty()) throw Error(ErrorCode::NoRampGeometry, "recording has no ramp descriptors");
  double entry = kRampDistanceCap;
  double exit = kRampDistanceCap;
  for (const auto& r : geometry.ramps) {
    if (r.direction != direction) continue;
    const double d = r.station - frame.x;
    if (d < 0.0) continue;
    double& slot = r.kind == RampKind::Entry ? entry : exit;
    slot = std::min(slot, d);
  }
  RampFeatures out = ramp_reachability(std::min(entry, exit), frame.speed());
  out.dist_entry = entry;
  out.dist_exit = exit;
  return out;
}

// ---------------------------------------------------------------------------
// Catalogue and extraction
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> build_catalogue() {
  std::vector<std::string> c = {"y", "vx", "vy", "ax", "ay", "lat_velocity", "heading", "yaw_rate", "lane_id"};
  for (Slot s : kAllSlots) {
    const std::string n(slot_name(s));
    c.push_back("gap_" + n);
    c.push_back("dv_" + n);
    c.push_back("da_" + n);
  }
  c.insert(c.end(), {"ramp_dist_entry", "ramp_dist_exit"});
  c.insert(c.end(), {"speed", "accel_mag", "curvature_radius"});
  for (const char* base : {"speed", "ax", "heading"})
    for (const char* stat : {"mean", "std", "min", "max"}) c.push_back(std::string(base) + "_" + stat + "_1s");
  c.insert(c.end(), {"lat_offset", "dist_left_boundary", "dist_right_boundary", "d_lat_offset", "d_dist_left_boundary",
                     "d_dist_right_boundary", "lat_offset_mean_w", "lat_disp_cum_w"});
  for (Slot s : kAllSlots) c.push_back("approach_" + std::string(slot_name(s)));
  c.push_back("occupancy");
  for (Slot s : kAllSlots) c.push_back("z_gap_" + std::string(slot_name(s)));
  for (Slot s : kAllSlots) c.push_back("s_gap_" + std::string(slot_name(s)));
  c.insert(c.end(), {"safe_gap_count", "safe_gap_count_left", "safe_gap_count_right"});
  c.insert(c.end(), {"lane_adv_left_lead", "lane_adv_left_rear", "lane_adv_left_min", "lane_adv_right_lead",
                     "lane_adv_right_rear", "lane_adv_right_min"});
  for (Slot s : kAllSlots) c.push_back("cgt_" + std::string(slot_name(s)));
  c.insert(c.end(), {"ttg_z_ego_lead", "ttg_z_left_lead", "ttg_z_right_lead"});
  c.insert(c.end(), {"min_dhw", "min_thw", "min_ttc", "has_dhw", "has_thw", "has_ttc"});
  c.insert(c.end(), {"is_car", "is_truck", "is_other", "lc_freq", "speed_ratio", "accel_ratio"});
  c.insert(c.end(), {"ramp_eta", "ramp_reach_5s", "ramp_reach_15s", "ramp_reach_30s"});
  return c;
}

bool is_ramp_feature(std::string_view name) { return name.starts_with("ramp_"); }

}  // namespace

const std::vector<std::string>& feature_catalogue() {
  static const std::vector<std::string> c = build_catalogue();
  return c;
}

FeatureExtractor::FeatureExtractor(FeatureManifest manifest, NeighborStats stats, SamplingConfig sampling,
                                   DetectionParams det)
    : manifest_(std::move(manifest)), stats_(stats), sampling_(sampling), det_(det) {
  const auto& cat = feature_catalogue();
  std::unordered_map<std::string, int> pos;
  for (std::size_t i = 0; i < cat.size(); ++i) pos.emplace(cat[i], static_cast<int>(i));
  for (const auto& f : manifest_.features) {
    auto it = pos.find(f.name);
    if (it == pos.end()) throw Error(ErrorCode::UnknownFeature, "no extractor for feature '" + f.name + "'", {f.name});
    columns_.push_back(it->second);
    needs_ramps_ = needs_ramps_ || is_ramp_feature(f.name);
  }
}

std::vector<double> FeatureExtractor::compute(const Recording& rec, const ValidatedTrack& track,
                                              std::int64_t anchor) const {
  if (!track.contains(anchor))
    throw Error(ErrorCode::EmptyWindow, "anchor " + std::to_string(anchor) + " outside track " +
                                            std::to_string(track.id()));
  const auto& f = track.at(anchor);
  const double f_s = rec.f_s;
  std::vector<double> all;
  all.reserve(feature_catalogue().size());
  auto put = [&](double v) { all.push_back(v); };

  const auto lane_pos = lane_position_features(track, rec.geometry, anchor, sampling_.window_frames());
  std::optional<RampFeatures> ramp;
  if (needs_ramps_) ramp = ramp_features(rec.geometry, track.track().direction, f);

  // raw
  for (double v : {f.y, f.vx, f.vy, f.ax, f.ay, f.lat_velocity, f.heading, f.yaw_rate}) put(v);
  put(static_cast<double>(*f.lane_id));
  const auto ni = neighbor_interaction_features(f);
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    put(ni.gap[s]);
    put(ni.dv[s]);
    put(ni.da[s]);
  }
  put(ramp ? ramp->dist_entry : 0.0);
  put(ramp ? ramp->dist_exit : 0.0);

  // category 1: kinematics
  const double speed = f.speed();
  put(speed);
  put(std::hypot(f.ax, f.ay));
  put(std::abs(f.yaw_rate) > speed / kCurvatureRadiusCap ? speed / std::abs(f.yaw_rate) : kCurvatureRadiusCap);
  {
    const auto second = std::max<std::int64_t>(1, std::lround(f_s));
    const std::int64_t from = std::max(track.first_frame(), anchor - second + 1);
    std::vector<double> sp, ax, hd;
    for (auto k = from; k <= anchor; ++k) {
      const auto& g = track.at(k);
      sp.push_back(g.speed());
      ax.push_back(g.ax);
      hd.push_back(g.heading);
    }
    for (const auto* series : {&sp, &ax, &hd}) {
      const auto w = rolling_stats(*series);
      put(w.mean);
      put(w.std);
      put(w.min);
      put(w.max);
    }
  }

  // category 2: lane position
  for (double v : {lane_pos.offset, lane_pos.dist_left, lane_pos.dist_right, lane_pos.d_offset, lane_pos.d_dist_left,
                   lane_pos.d_dist_right, lane_pos.offset_mean, lane_pos.cum_disp})
    put(v);

  // category 3: interaction
  for (double v : ni.approach) put(v);
  put(ni.occupancy);
  std::array<NormalizedDistance, kSlotCount> nd;
  for (std::size_t s = 0; s < kSlotCount; ++s) nd[s] = normalized_distance(ni.gap[s], stats_.gap[s]);
  for (const auto& d : nd) put(d.z);
  for (const auto& d : nd) put(d.s);
  std::array<int, kSlotCount> safe{};
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const auto& slot = f.neighbors.slots[s];
    safe[s] = safe_gap_indicator(slot.occupied() ? std::optional<double>(slot.gap) : std::nullopt, stats_.gap[s]);
  }
  int total = 0;
  for (int g : safe) total += g;
  put(total);
  put(safe[index(Slot::LeftLead)] + safe[index(Slot::LeftRear)]);
  put(safe[index(Slot::RightLead)] + safe[index(Slot::RightRear)]);
  for (int side : {1, -1}) {
    const auto a = lane_advantage(f, side);
    put(a.lead);
    put(a.rear);
    put(a.availability);
  }
  for (std::size_t s = 0; s < kSlotCount; ++s) put(closing_gap_time(ni.gap[s], ni.dv[s]));
  for (Slot s : {Slot::EgoLead, Slot::LeftLead, Slot::RightLead}) {
    const auto& ts = stats_.time_gap[index(s)];
    const double t = time_to_gap(ni.gap[index(s)], speed);
    // A slot that never varied in training carries no information.
    put(ts.std > 0.0 ? (t - ts.mean) / ts.std : 0.0);
  }

  // category 4: safety minima over the history window
  {
    const std::int64_t from = std::max(track.first_frame(), anchor - sampling_.window_frames() + 1);
    const auto frames = track.frames().subspan(static_cast<std::size_t>(from - track.first_frame()),
                                               static_cast<std::size_t>(anchor - from + 1));
    const auto m = safety_minima(frames);
    for (double v : {m.min_dhw, m.min_thw, m.min_ttc}) put(std::min(v, kSafetyCap));
    put(m.has_dhw);
    put(m.has_thw);
    put(m.has_ttc);
  }

  // category 5: behavior
  const auto b = behavior_features(track, rec.geometry, det_, f_s, anchor);
  for (double v : {b.is_car, b.is_truck, b.is_other, b.lc_freq, b.speed_ratio, b.accel_ratio}) put(v);

  put(ramp ? ramp->eta : 0.0);
  put(ramp ? ramp->reach_5s : 0.0);
  put(ramp ? ramp->reach_15s : 0.0);
  put(ramp ? ramp->reach_30s : 0.0);

  if (all.size() != feature_catalogue().size())
    throw Error(ErrorCode::ManifestMismatch, "feature catalogue out of sync with extractor");

  std::vector<double> out;
  out.reserve(columns_.size());
  for (int c : columns_) out.push_back(all[static_cast<std::size_t>(c)]);
  check_manifest_length(manifest_, out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Feature matrix
// ---------------------------------------------------------------------------

void FeatureMatrix::append_row(std::span<const double> v, std::uint8_t label, const SampleRef* ref) {
  if (rows == 0 && cols == 0) cols = v.size();
  if (v.size() != cols) throw Error(ErrorCode::ManifestMismatch, "row width differs from matrix width");
  for (double x : v) values.push_back(static_cast<float>(x));
  labels.push_back(label);
  if (ref) refs.push_back(*ref);
  ++rows;
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> idx) const {
  FeatureMatrix m;
  m.manifest_hash = manifest_hash;
  m.cols = cols;
  m.names = names;
  m.rows = idx.size();
  m.values.reserve(idx.size() * cols);
  m.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    auto r = row(i);
    m.values.insert(m.values.end(), r.begin(), r.end());
    m.labels.push_back(labels[i]);
    if (!refs.empty()) m.refs.push_back(refs[i]);
  }
  return m;
}

FeatureMatrix build_feature_matrix(const std::vector<Recording>& recordings, const std::vector<LabeledSample>& samples,
                                   const FeatureExtractor& extractor) {
  std::unordered_map<int, const Recording*> recs;
  for (const auto& r : recordings) recs[r.recording_id] = &r;
  std::map<std::pair<int, int>, const ValidatedTrack*> tracks;
  for (const auto& r : recordings)
    for (const auto& t : r.tracks) tracks[{r.recording_id, t.id()}] = &t;

  FeatureMatrix m;
  m.manifest_hash = extractor.manifest().hash();
  m.cols = extractor.manifest().size();
  m.names = extractor.manifest().names();
  m.rows = samples.size();
  m.values.assign(m.rows * m.cols, 0.0f);
  m.labels.resize(m.rows);
  m.refs.resize(m.rows);

  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& s = samples[static_cast<std::size_t>(i)];
      auto rit = recs.find(s.recording_id);
      auto tit = tracks.find({s.recording_id, s.track_id});
      if (rit == recs.end() || tit == tracks.end())
        throw Error(ErrorCode::IoError, "sample refers to unknown recording " + std::to_string(s.recording_id) +
                                            " track " + std::to_string(s.track_id));
      const auto v = extractor.compute(*rit->second, *tit->second, s.anchor_frame);
      float* dst = m.values.data() + static_cast<std::size_t>(i) * m.cols;
      for (std::size_t c = 0; c < m.cols; ++c) dst[c] = static_cast<float>(v[c]);
      m.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(s.label);
      m.refs[static_cast<std::size_t>(i)] = {s.recording_id, s.track_id, s.location_id, s.anchor_frame};
    } catch (...) {
#pragma omp critical(lcp_feature_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return m;
}

namespace {

constexpr char kMagic[4] = {'L', 'C', 'P', 'F'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kHasRefs = 1u;
constexpr std::uint32_t kHasNames = 2u;

template <typename T>
void put_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream& in, const std::string& name) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(ErrorCode::IoError, name + " is truncated");
  return v;
}

}  // namespace

void write_features_bin(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  std::uint32_t flags = 0;
  if (!m.refs.empty()) flags |= kHasRefs;
  if (!m.names.empty()) flags |= kHasNames;
  out.write(kMagic, 4);
  put_raw(out, kFormatVersion);
  put_raw(out, m.manifest_hash);
  put_raw(out, static_cast<std::uint64_t>(m.rows));
  put_raw(out, static_cast<std::uint64_t>(m.cols));
  put_raw(out, flags);
  put_raw(out, std::uint32_t{0});
  out.write(reinterpret_cast<const char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(m.labels.data()), static_cast<std::streamsize>(m.labels.size()));
  if (flags & kHasRefs) {
    for (const auto& r : m.refs) {
      put_raw(out, static_cast<std::int32_t>(r.recording_id));
      put_raw(out, static_cast<std::int32_t>(r.track_id));
      put_raw(out, static_cast<std::int32_t>(r.location_id));
      put_raw(out, static_cast<std::int64_t>(r.anchor_frame));
    }
  }
  if (flags & kHasNames) {
    put_raw(out, static_cast<std::uint32_t>(m.names.size()));
    for (const auto& n : m.names) {
      put_raw(out, static_cast<std::uint32_t>(n.size()));
      out.write(n.data(), static_cast<std::streamsize>(n.size()));
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

FeatureMatrix read_features_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::string name = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::IoError, name + " is not a features file");
  if (get_raw<std::uint32_t>(in, name) != kFormatVersion)
    throw Error(ErrorCode::IoError, name + " has an unsupported format version");
  FeatureMatrix m;
  m.manifest_hash = get_raw<std::uint64_t>(in, name);
  m.rows = get_raw<std::uint64_t>(in, name);
  m.cols = get_raw<std::uint64_t>(in, name);
  const auto flags = get_raw<std::uint32_t>(in, name);
  get_raw<std::uint32_t>(in, name);
  m.values.resize(m.rows * m.cols);
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  m.labels.resize(m.rows);
  in.read(reinterpret_cast<char*>(m.labels.data()), static_cast<std::streamsize>(m.rows));
  if (!in) throw Error(ErrorCode::IoError, name + " is truncated");
  for (auto l : m.labels)
    if (l >= kNumClasses) throw Error(ErrorCode::IoError, name + " holds an invalid label byte");
  if (flags & kHasRefs) {
    m.refs.resize(m.rows);
    for (auto& r : m.refs) {
      r.recording_id = get_raw<std::int32_t>(in, name);
      r.track_id = get_raw<std::int32_t>(in, name);
      r.location_id = get_raw<std::int32_t>(in, name);
      r.anchor_frame = get_raw<std::int64_t>(in, name);
    }
  }
  if (flags & kHasNames) {
    const auto count = get_raw<std::uint32_t>(in, name);
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto len = get_raw<std::uint32_t>(in, name);
      std::string s(len, '\0');
      in.read(s.data(), len);
      if (!in) throw Error(ErrorCode::IoError, name + " is truncated");
      m.names.push_back(std::move(s));
    }
  }
  return m;
}

void write_features_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "# manifest_hash=" << hex64(m.manifest_hash) << '\n';
  for (std::size_t c = 0; c < m.cols; ++c) out << (m.names.size() == m.cols ? m.names[c] : "f" + std::to_string(c)) << ',';
  out << "label";
  if (!m.refs.empty()) out << ",recording_id,track_id,location_id,anchor_frame";
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out << csv::format_double(m.at(r, c)) << ',';
    out << to_string(static_cast<Maneuver>(m.labels[r]));
    if (!m.refs.empty()) {
      const auto& ref = m.refs[r];
      out << ',' << ref.recording_id << ',' << ref.track_id << ',' << ref.location_id << ',' << ref.anchor_frame;
    }
    out << '\n';
  }
}

FeatureMatrix read_features_csv(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  FeatureMatrix m;
  if (text.starts_with("#")) {
    const auto eol = text.find('\n');
    const std::string first = text.substr(0, eol);
    const auto eq = first.find('=');
    if (eq != std::string::npos) m.manifest_hash = std::stoull(first.substr(eq + 1), nullptr, 16);
    text.erase(0, eol == std::string::npos ? text.size() : eol + 1);
  }
  auto reader = csv::Reader::from_string(std::move(text), path.string());
  const auto& header = reader.header();
  auto label_col = reader.column("label");
  if (!label_col) throw Error(ErrorCode::MissingColumn, path.string() + " lacks a label column", {"label"});
  m.cols = *label_col;
  m.names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(m.cols));
  const bool has_refs = reader.column("anchor_frame").has_value();
  std::vector<std::string_view> row;
  while (reader.next(row)) {
    if (row.size() < m.cols + 1 + (has_refs ? 4 : 0))
      throw Error(ErrorCode::RowParseError, path.string() + " line " + std::to_string(reader.line()));
    for (std::size_t c = 0; c < m.cols; ++c) {
      auto v = csv::parse_double(row[c]);
      if (!v) throw Error(ErrorCode::RowParseError, path.string() + " line " + std::to_string(reader.line()));
      m.values.push_back(static_cast<float>(*v));
    }
    m.labels.push_back(static_cast<std::uint8_t>(parse_maneuver(row[m.cols])));
    if (has_refs) {
      SampleRef r;
      r.recording_id = static_cast<int>(csv::parse_int(row[m.cols + 1]).value_or(0));
      r.track_id = static_cast<int>(csv::parse_int(row[m.cols + 2]).value_or(0));
      r.location_id = static_cast<int>(csv::parse_int(row[m.cols + 3]).value_or(0));
      r.anchor_frame = csv::parse_int(row[m.cols + 4]).value_or(0);
      m.refs.push_back(r);
    }
    ++m.rows;
  }
  return m;
}

void write_features(const FeatureMatrix& m, const std::filesystem::path& path) {
  if (path.extension() == ".csv") write_features_csv(m, path);
  else write_features_bin(m, path);
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_features_csv(path) : read_features_bin(path);
}

}  // namespace lcp
