#include "lcp/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "lcp/csv.hpp"
#include "lcp/error.hpp"

namespace lcp {

using nlohmann::json;

std::string_view to_string(DatasetProfile p) {
  switch (p) {
    case DatasetProfile::HighD: return "highd";
    case DatasetProfile::ExiD: return "exid";
    case DatasetProfile::Custom: return "custom";
  }
  return "custom";
}

DatasetProfile parse_profile(std::string_view s) {
  if (s == "highd") return DatasetProfile::HighD;
  if (s == "exid") return DatasetProfile::ExiD;
  if (s == "custom") return DatasetProfile::Custom;
  throw Error(ErrorCode::InvalidConfig, "unknown dataset profile '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Column mapping
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, double>& unit_table() {
  static const std::map<std::string, double> table = {
      {"m", 1.0},     {"m/s", 1.0},          {"m/s2", 1.0},    {"s", 1.0},      {"rad", 1.0},
      {"rad/s", 1.0}, {"km/h", 1.0 / 3.6},   {"mph", 0.44704}, {"ft", 0.3048},  {"ms", 1e-3},
      {"deg", std::numbers::pi / 180.0},     {"deg/s", std::numbers::pi / 180.0},
  };
  return table;
}

Conversion conversion_from(const json& j) {
  Conversion c;
  if (j.contains("unit")) {
    const auto unit = j.at("unit").get<std::string>();
    auto it = unit_table().find(unit);
    if (it == unit_table().end()) throw Error(ErrorCode::UnitError, "unknown unit '" + unit + "'");
    c.scale = it->second;
  }
  if (j.contains("scale")) c.scale = j.at("scale").get<double>();
  if (j.contains("offset")) c.offset = j.at("offset").get<double>();
  if (!std::isfinite(c.scale) || c.scale == 0.0 || !std::isfinite(c.offset))
    throw Error(ErrorCode::UnitError, "conversion must be a finite, non-degenerate affine map");
  return c;
}

std::map<std::string, std::string> string_map(const json& j, const char* key) {
  std::map<std::string, std::string> out;
  if (j.contains(key))
    for (auto& [k, v] : j.at(key).items()) out[k] = v.get<std::string>();
  return out;
}

}  // namespace

Conversion parse_conversion(const std::string& json_text) { return conversion_from(json::parse(json_text)); }

void ColumnMapping::validate() const {
  auto require = [](const std::map<std::string, std::string>& m, std::initializer_list<const char*> names,
                    const char* group) {
    for (const char* n : names)
      if (!m.count(n))
        throw Error(ErrorCode::MissingColumn, std::string(group) + " mapping lacks required field '" + n + "'",
                    {n});
  };
  require(recording_meta, {"recording_id", "location_id", "f_s"}, "recording_meta");
  require(track_meta, {"track_id"}, "track_meta");
  require(tracks, {"frame", "track_id", "x", "y", "vx", "vy", "lane_id"}, "tracks");
}

ColumnMapping load_column_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open mapping " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, "mapping " + path.string() + ": " + e.what());
  }
  ColumnMapping m;
  m.profile = parse_profile(j.value("profile", std::string("custom")));
  m.recording_meta = string_map(j, "recording_meta");
  m.track_meta = string_map(j, "track_meta");
  m.tracks = string_map(j, "tracks");
  if (j.contains("conversions"))
    for (auto& [k, v] : j.at("conversions").items()) m.conversions[k] = conversion_from(v);
  if (j.contains("sentinels"))
    for (auto& [k, v] : j.at("sentinels").items()) m.sentinels[k] = v.get<std::vector<double>>();
  m.top_left_reference = j.value("position_reference", std::string("center")) == "top_left";
  m.flip_by_direction = j.value("direction_normalization", std::string("none")) == "highd";
  m.markings_geometry = j.value("geometry", std::string("markings")) == "markings";
  m.validate();
  return m;
}

ColumnMapping default_column_mapping(DatasetProfile profile, const std::filesystem::path& data_dir) {
  return load_column_mapping(data_dir / "mappings" / (std::string(to_string(profile)) + ".json"));
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

std::vector<Lane> lanes_from_boundaries(const std::vector<double>& boundaries, int first_id, int id_step) {
  if (boundaries.size() < 2)
    throw Error(ErrorCode::FewerThanTwoBoundaries,
                "need at least two lane boundaries, got " + std::to_string(boundaries.size()));
  std::vector<Lane> lanes;
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    const double r = boundaries[i];
    const double l = boundaries[i + 1];
    if (!(l > r))
      throw Error(ErrorCode::OverlappingLanes, "boundary " + csv::format_double(l) + " does not exceed " +
                                                   csv::format_double(r));
    lanes.push_back(Lane{first_id + static_cast<int>(i) * id_step, r + (l - r) / 2.0, l, r});
  }
  return lanes;
}

LaneGeometry build_lane_geometry(const RecordingMeta& meta, DatasetProfile profile) {
  LaneGeometry g;
  if (profile == DatasetProfile::HighD) {
    // highD numbers lanes top to bottom of the image across both carriageways,
    // starting at 2. Direction 1 keeps image y (left = larger y), direction 2
    // mirrors it.
    const auto& upper = meta.upper_markings;
    const auto& lower = meta.lower_markings;
    if (upper.size() < 2 && lower.size() < 2)
      throw Error(ErrorCode::FewerThanTwoBoundaries, "recording has fewer than two lane markings per direction");
    if (upper.size() >= 2) {
      for (std::size_t i = 1; i < upper.size(); ++i)
        if (!(upper[i] > upper[i - 1]))
          throw Error(ErrorCode::OverlappingLanes, "upper lane markings are not increasing");
      g.lanes[DrivingDirection::Dir1] = lanes_from_boundaries(upper, 2, 1);
    }
    if (lower.size() >= 2) {
      for (std::size_t i = 1; i < lower.size(); ++i)
        if (!(lower[i] > lower[i - 1]))
          throw Error(ErrorCode::OverlappingLanes, "lower lane markings are not increasing");
      std::vector<double> mirrored(lower.rbegin(), lower.rend());
      for (auto& v : mirrored) v = -v;
      const int n_upper = static_cast<int>(upper.size());
      const int n_lower_lanes = static_cast<int>(lower.size()) - 1;
      // After mirroring, ascending y runs from the bottom lane (largest id) upward.
      g.lanes[DrivingDirection::Dir2] = lanes_from_boundaries(mirrored, n_upper + 1 + n_lower_lanes, -1);
    }
    return g;
  }
  // Generic profiles: markings already road-aligned; lanes numbered 1.. right to left.
  if (!meta.lower_markings.empty()) g.lanes[DrivingDirection::Dir2] = lanes_from_boundaries(meta.lower_markings, 1, 1);
  if (!meta.upper_markings.empty()) g.lanes[DrivingDirection::Dir1] = lanes_from_boundaries(meta.upper_markings, 1, 1);
  if (g.lanes.empty()) throw Error(ErrorCode::FewerThanTwoBoundaries, "no lane markings in recording metadata");
  return g;
}

namespace {

const char* dir_key(DrivingDirection d) { return d == DrivingDirection::Dir1 ? "dir1" : "dir2"; }

json geometry_json(const LaneGeometry& g) {
  json j = json::object();
  for (const auto& [dir, lanes] : g.lanes) {
    json arr = json::array();
    for (const auto& l : lanes)
      arr.push_back({{"lane_id", l.lane_id}, {"center", l.center}, {"left", l.left}, {"right", l.right}});
    j[dir_key(dir)] = arr;
  }
  json ramps = json::array();
  for (const auto& r : g.ramps)
    ramps.push_back({{"kind", r.kind == RampKind::Entry ? "entry" : "exit"},
                     {"direction", static_cast<int>(r.direction)},
                     {"station", r.station}});
  j["ramps"] = ramps;
  return j;
}

LaneGeometry geometry_from(const json& j) {
  LaneGeometry g;
  for (auto dir : {DrivingDirection::Dir1, DrivingDirection::Dir2}) {
    if (!j.contains(dir_key(dir))) continue;
    std::vector<Lane> lanes;
    for (const auto& l : j.at(dir_key(dir))) {
      Lane lane{l.at("lane_id").get<int>(), 0.0, l.at("left").get<double>(), l.at("right").get<double>()};
      lane.center = l.contains("center") ? l.at("center").get<double>() : lane.right + (lane.left - lane.right) / 2;
      if (!(lane.left > lane.right) || lane.center < lane.right || lane.center > lane.left)
        throw Error(ErrorCode::OverlappingLanes, "lane " + std::to_string(lane.lane_id) + " has inverted bounds");
      lanes.push_back(lane);
    }
    std::sort(lanes.begin(), lanes.end(), [](const Lane& a, const Lane& b) { return a.right < b.right; });
    for (std::size_t i = 1; i < lanes.size(); ++i)
      if (lanes[i].right < lanes[i - 1].left - 1e-9)
        throw Error(ErrorCode::OverlappingLanes, "lanes " + std::to_string(lanes[i - 1].lane_id) + " and " +
                                                     std::to_string(lanes[i].lane_id) + " overlap");
    g.lanes[dir] = std::move(lanes);
  }
  if (j.contains("ramps")) {
    for (const auto& r : j.at("ramps")) {
      Ramp ramp;
      ramp.kind = r.at("kind").get<std::string>() == "exit" ? RampKind::Exit : RampKind::Entry;
      ramp.direction = static_cast<DrivingDirection>(r.value("direction", 2));
      ramp.station = r.at("station").get<double>();
      g.ramps.push_back(ramp);
    }
  }
  return g;
}

}  // namespace

std::string geometry_to_json(const LaneGeometry& g) { return geometry_json(g).dump(2); }
LaneGeometry geometry_from_json(const std::string& text) { return geometry_from(json::parse(text)); }

const ValidatedTrack* Recording::find(int track_id) const {
  for (const auto& t : tracks)
    if (t.id() == track_id) return &t;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Raw dataset loading
// ---------------------------------------------------------------------------

namespace {

struct BoundColumn {
  std::string field;
  std::size_t col = 0;
  Conversion conv;
  std::vector<double> sentinels;
};

class RowBinder {
 public:
  RowBinder(const csv::Reader& reader, const std::map<std::string, std::string>& fields, const ColumnMapping& m) {
    for (const auto& [field, source] : fields) {
      auto col = reader.column(source);
      if (!col) throw Error(ErrorCode::MissingColumn, reader.name() + " lacks column '" + source + "'", {source});
      BoundColumn b{field, *col, {}, {}};
      if (auto it = m.conversions.find(field); it != m.conversions.end()) b.conv = it->second;
      if (auto it = m.sentinels.find(field); it != m.sentinels.end()) b.sentinels = it->second;
      index_[field] = columns_.size();
      columns_.push_back(std::move(b));
    }
  }

  bool has(const std::string& field) const { return index_.count(field) > 0; }

  std::string_view raw(const std::vector<std::string_view>& row, const std::string& field) const {
    const auto& b = columns_[index_.at(field)];
    return b.col < row.size() ? row[b.col] : std::string_view{};
  }

  /// Converted value; nullopt for empty cells and sentinel values.
  std::optional<double> value(const std::vector<std::string_view>& row, const std::string& field,
                              const csv::Reader& reader) const {
    auto it = index_.find(field);
    if (it == index_.end()) return std::nullopt;
    const auto& b = columns_[it->second];
    if (b.col >= row.size())
      throw Error(ErrorCode::RowParseError, reader.name() + " line " + std::to_string(reader.line()) +
                                                ": too few fields", {std::to_string(reader.line())});
    const auto cell = row[b.col];
    if (cell.empty()) return std::nullopt;
    auto v = csv::parse_double(cell);
    if (!v)
      throw Error(ErrorCode::RowParseError,
                  reader.name() + " line " + std::to_string(reader.line()) + ": cannot parse '" + std::string(cell) +
                      "' in column " + field,
                  {std::to_string(reader.line())});
    for (double s : b.sentinels)
      if (*v == s) return std::nullopt;
    return b.conv.scale * *v + b.conv.offset;
  }

  double required(const std::vector<std::string_view>& row, const std::string& field,
                  const csv::Reader& reader) const {
    auto v = value(row, field, reader);
    if (!v)
      throw Error(ErrorCode::RowParseError,
                  reader.name() + " line " + std::to_string(reader.line()) + ": missing value for " + field,
                  {std::to_string(reader.line())});
    return *v;
  }

 private:
  std::vector<BoundColumn> columns_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<double> parse_markings(std::string_view s) {
  std::vector<double> out;
  std::vector<std::string_view> parts;
  csv::split(s, ';', parts);
  for (auto p : parts) {
    if (auto v = csv::parse_double(p)) out.push_back(*v);
  }
  return out;
}

const char* slot_id_field(Slot s) {
  switch (s) {
    case Slot::EgoLead: return "ego_lead_id";
    case Slot::EgoRear: return "ego_rear_id";
    case Slot::LeftLead: return "left_lead_id";
    case Slot::LeftRear: return "left_rear_id";
    case Slot::RightLead: return "right_lead_id";
    case Slot::RightRear: return "right_rear_id";
  }
  return "";
}

std::string slot_gap_field(Slot s) { return std::string(slot_name(s)) + "_gap"; }

struct TrackMetaRow {
  double length = 4.5;
  double width = 1.8;
  VehicleClass cls = VehicleClass::Car;
  DrivingDirection dir = DrivingDirection::Dir2;
};

struct PendingFrame {
  Frame frame;
  std::array<std::optional<int>, kSlotCount> neighbor_ids{};
  std::array<std::optional<double>, kSlotCount> neighbor_gaps{};
};

double bumper_gap(const Frame& ego, double ego_len, const Frame& other, double other_len, bool lead) {
  const double centers = lead ? other.x - ego.x : ego.x - other.x;
  return std::max(0.0, centers - (ego_len + other_len) / 2.0);
}

}  // namespace

Recording load_recording(const std::filesystem::path& meta_path, const std::filesystem::path& tracks_meta_path,
                         const std::filesystem::path& tracks_path, const ColumnMapping& mapping,
                         const std::optional<std::filesystem::path>& geometry_path) {
  mapping.validate();

  // Recording meta: first data row.
  csv::Reader meta_reader(meta_path);
  RowBinder meta_bind(meta_reader, mapping.recording_meta, mapping);
  std::vector<std::string_view> row;
  if (!meta_reader.next(row)) throw Error(ErrorCode::RowParseError, meta_path.string() + " has no data row");
  RecordingMeta meta;
  meta.recording_id = static_cast<int>(meta_bind.required(row, "recording_id", meta_reader));
  meta.location_id = static_cast<int>(meta_bind.required(row, "location_id", meta_reader));
  meta.f_s = meta_bind.required(row, "f_s", meta_reader);
  if (!(meta.f_s > 0)) throw Error(ErrorCode::InconsistentMeta, "frame rate must be positive");
  meta.speed_limit = meta_bind.value(row, "speed_limit", meta_reader);
  if (meta_bind.has("upper_markings")) meta.upper_markings = parse_markings(meta_bind.raw(row, "upper_markings"));
  if (meta_bind.has("lower_markings")) meta.lower_markings = parse_markings(meta_bind.raw(row, "lower_markings"));

  Recording rec;
  rec.recording_id = meta.recording_id;
  rec.location_id = meta.location_id;
  rec.f_s = meta.f_s;
  if (mapping.markings_geometry) {
    rec.geometry = build_lane_geometry(meta, mapping.profile);
  } else {
    if (!geometry_path) throw Error(ErrorCode::InvalidConfig, "profile requires an external lane geometry file");
    std::ifstream gin(*geometry_path);
    if (!gin) throw Error(ErrorCode::IoError, "cannot open " + geometry_path->string());
    std::stringstream ss;
    ss << gin.rdbuf();
    rec.geometry = geometry_from_json(ss.str());
  }

  // Track meta.
  csv::Reader tm_reader(tracks_meta_path);
  RowBinder tm_bind(tm_reader, mapping.track_meta, mapping);
  std::map<int, TrackMetaRow> track_meta;
  while (tm_reader.next(row)) {
    const int id = static_cast<int>(tm_bind.required(row, "track_id", tm_reader));
    TrackMetaRow tm;
    if (auto v = tm_bind.value(row, "length", tm_reader)) tm.length = *v;
    if (auto v = tm_bind.value(row, "width", tm_reader)) tm.width = *v;
    if (tm_bind.has("vehicle_class")) tm.cls = parse_vehicle_class(tm_bind.raw(row, "vehicle_class"));
    if (auto v = tm_bind.value(row, "driving_direction", tm_reader))
      tm.dir = std::lround(*v) == 1 ? DrivingDirection::Dir1 : DrivingDirection::Dir2;
    track_meta[id] = tm;
  }

  // Per-frame rows.
  csv::Reader tr_reader(tracks_path);
  RowBinder tr_bind(tr_reader, mapping.tracks, mapping);
  std::map<int, std::vector<PendingFrame>> pending;
  while (tr_reader.next(row)) {
    const int id = static_cast<int>(tr_bind.required(row, "track_id", tr_reader));
    if (tr_bind.has("recording_id")) {
      const auto rid = tr_bind.value(row, "recording_id", tr_reader);
      if (rid && static_cast<int>(*rid) != rec.recording_id)
        throw Error(ErrorCode::InconsistentMeta, "tracks file recording id differs from meta");
    }
    const TrackMetaRow tm = track_meta.count(id) ? track_meta.at(id) : TrackMetaRow{};
    PendingFrame pf;
    Frame& f = pf.frame;
    f.frame_index = static_cast<std::int64_t>(std::llround(tr_bind.required(row, "frame", tr_reader)));
    if (auto t = tr_bind.value(row, "t", tr_reader)) {
      if (std::abs(*t - static_cast<double>(f.frame_index) / rec.f_s) > 1e-3)
        throw Error(ErrorCode::InconsistentMeta, "time column disagrees with frame/f_s at line " +
                                                     std::to_string(tr_reader.line()));
    }
    double x = tr_bind.required(row, "x", tr_reader);
    double y = tr_bind.required(row, "y", tr_reader);
    if (mapping.top_left_reference) {
      x += tm.length / 2.0;
      y += tm.width / 2.0;
    }
    double vx = tr_bind.required(row, "vx", tr_reader);
    double vy = tr_bind.required(row, "vy", tr_reader);
    double ax = tr_bind.value(row, "ax", tr_reader).value_or(0.0);
    double ay = tr_bind.value(row, "ay", tr_reader).value_or(0.0);
    if (mapping.flip_by_direction) {
      if (tm.dir == DrivingDirection::Dir1) {
        x = -x;
        vx = -vx;
        ax = -ax;
      } else {
        y = -y;
        vy = -vy;
        ay = -ay;
      }
    }
    f.x = x;
    f.y = y;
    f.vx = vx;
    f.vy = vy;
    f.ax = ax;
    f.ay = ay;
    f.lat_velocity = tr_bind.value(row, "lat_velocity", tr_reader).value_or(vy);
    if (auto lane = tr_bind.value(row, "lane_id", tr_reader)) f.lane_id = static_cast<int>(std::lround(*lane));
    f.heading = tr_bind.value(row, "heading", tr_reader).value_or(std::atan2(vy, vx));
    if (mapping.flip_by_direction) f.heading = std::atan2(vy, vx);
    if (auto yr = tr_bind.value(row, "yaw_rate", tr_reader)) f.yaw_rate = *yr;
    auto positive = [](std::optional<double> v) { return v && *v > 0 ? v : std::nullopt; };
    f.dhw = positive(tr_bind.value(row, "dhw", tr_reader));
    f.thw = positive(tr_bind.value(row, "thw", tr_reader));
    f.ttc = positive(tr_bind.value(row, "ttc", tr_reader));
    for (Slot s : kAllSlots) {
      if (auto nid = tr_bind.value(row, slot_id_field(s), tr_reader)) pf.neighbor_ids[index(s)] = static_cast<int>(*nid);
      if (auto gap = tr_bind.value(row, slot_gap_field(s), tr_reader)) pf.neighbor_gaps[index(s)] = *gap;
    }
    pending[id].push_back(std::move(pf));
  }

  // Validate, then resolve neighbors against validated tracks.
  std::map<int, std::map<std::int64_t, std::array<std::optional<int>, kSlotCount>>> ids_by_frame;
  std::map<int, std::map<std::int64_t, std::array<std::optional<double>, kSlotCount>>> gaps_by_frame;
  for (auto& [id, frames] : pending) {
    std::sort(frames.begin(), frames.end(),
              [](const PendingFrame& a, const PendingFrame& b) { return a.frame.frame_index < b.frame.frame_index; });
    const TrackMetaRow tm = track_meta.count(id) ? track_meta.at(id) : TrackMetaRow{};
    Track t;
    t.track_id = id;
    t.location_id = rec.location_id;
    t.direction = tm.dir;
    t.vehicle_class = tm.cls;
    t.length = tm.length;
    t.width = tm.width;
    t.speed_limit = meta.speed_limit;
    for (auto& pf : frames) {
      ids_by_frame[id][pf.frame.frame_index] = pf.neighbor_ids;
      gaps_by_frame[id][pf.frame.frame_index] = pf.neighbor_gaps;
      t.frames.push_back(pf.frame);
    }
    try {
      rec.tracks.push_back(validate_track(std::move(t), rec.f_s));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ExcessiveGaps) throw;
    }
  }

  std::unordered_map<int, const ValidatedTrack*> by_id;
  for (const auto& t : rec.tracks) by_id[t.id()] = &t;

  for (auto& vt : rec.tracks) {
    const auto& ids = ids_by_frame[vt.id()];
    const auto& gaps = gaps_by_frame[vt.id()];
    const double ego_len = vt.track().length;
    auto& frames = TrackEditor::frames(vt);
    for (std::size_t k = 0; k < frames.size(); ++k) {
      Frame& f = frames[k];
      // Interpolated frames borrow the previous observed frame's neighbor ids.
      auto it = ids.upper_bound(f.frame_index);
      if (it == ids.begin()) continue;
      --it;
      const auto& slot_ids = it->second;
      const auto git = gaps.find(it->first);
      for (Slot s : kAllSlots) {
        auto& slot = f.neighbors[s];
        slot = NeighborSlot{};
        const auto nid = slot_ids[index(s)];
        if (!nid) continue;
        auto nt = by_id.find(*nid);
        if (nt == by_id.end() || !nt->second->contains(f.frame_index)) continue;
        const Frame& nf = nt->second->at(f.frame_index);
        slot.track_id = *nid;
        const auto& given_gap = git != gaps.end() ? git->second[index(s)] : std::optional<double>{};
        slot.gap = given_gap && it->first == f.frame_index ? std::max(0.0, *given_gap)
                                                           : bumper_gap(f, ego_len, nf, nt->second->track().length,
                                                                        is_lead(s));
        slot.delta_v = nf.vx - f.vx;
        slot.delta_a = nf.ax - f.ax;
      }
    }
    if (!mapping.tracks.count("yaw_rate") && frames.size() > 1) {
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const std::size_t a = k == 0 ? 0 : k - 1;
        const std::size_t b = k + 1 < frames.size() ? k + 1 : k;
        double d = frames[b].heading - frames[a].heading;
        d = std::remainder(d, 2.0 * std::numbers::pi);
        frames[k].yaw_rate = d * rec.f_s / static_cast<double>(b - a);
      }
    }
    assign_lateral_offsets(vt, rec.geometry);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Normalized format
// ---------------------------------------------------------------------------

std::vector<std::string> normalized_header() {
  std::vector<std::string> h = {"recording_id", "location_id", "track_id", "frame",        "t",       "x",
                                "y",            "vx",          "vy",       "ax",           "ay",      "lat_velocity",
                                "lane_id",      "heading",     "yaw_rate", "dhw",          "thw",     "ttc"};
  for (Slot s : kAllSlots) {
    const std::string n(slot_name(s));
    h.push_back(n + "_id");
    h.push_back(n + "_gap");
    h.push_back(n + "_dv");
    h.push_back(n + "_da");
  }
  return h;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

std::filesystem::path csv_name(const std::filesystem::path& dir, int id) {
  return dir / ("recording_" + std::to_string(id) + ".csv");
}
std::filesystem::path json_name(const std::filesystem::path& dir, int id) {
  return dir / ("recording_" + std::to_string(id) + ".json");
}

}  // namespace

void write_normalized(const Recording& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(csv_name(dir, rec.recording_id), std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write into " + dir.string());
    const auto header = normalized_header();
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    std::string line;
    for (const auto& vt : rec.tracks) {
      for (const auto& f : vt.frames()) {
        line.clear();
        line += std::to_string(rec.recording_id) + ',' + std::to_string(rec.location_id) + ',' +
                std::to_string(vt.id()) + ',' + std::to_string(f.frame_index) + ',';
        for (double v : {f.t, f.x, f.y, f.vx, f.vy, f.ax, f.ay, f.lat_velocity}) line += csv::format_double(v) + ',';
        line += (f.lane_id ? std::to_string(*f.lane_id) : std::string()) + ',';
        line += csv::format_double(f.heading) + ',' + csv::format_double(f.yaw_rate) + ',';
        line += opt(f.dhw) + ',' + opt(f.thw) + ',' + opt(f.ttc);
        for (const auto& s : f.neighbors.slots) {
          if (s.occupied())
            line += ',' + std::to_string(*s.track_id) + ',' + csv::format_double(s.gap) + ',' +
                    csv::format_double(s.delta_v) + ',' + csv::format_double(s.delta_a);
          else
            line += ",,,,";
        }
        out << line << '\n';
      }
    }
  }
  json j;
  j["format"] = "lcpredict-normalized";
  j["version"] = 1;
  j["recording_id"] = rec.recording_id;
  j["location_id"] = rec.location_id;
  j["f_s"] = rec.f_s;
  j["lane_geometry"] = geometry_json(rec.geometry);
  json tracks = json::array();
  for (const auto& vt : rec.tracks) {
    const auto& t = vt.track();
    json tj = {{"track_id", t.track_id},
               {"direction", static_cast<int>(t.direction)},
               {"vehicle_class", std::string(to_string(t.vehicle_class))},
               {"length", t.length},
               {"width", t.width},
               {"interpolated_frames", vt.interpolated_frames()}};
    tj["speed_limit"] = t.speed_limit ? json(*t.speed_limit) : json(nullptr);
    tracks.push_back(tj);
  }
  j["tracks"] = tracks;
  std::ofstream out(json_name(dir, rec.recording_id));
  out << j.dump(2) << '\n';
}

Recording read_normalized(const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
  std::ifstream jin(json_path);
  if (!jin) throw Error(ErrorCode::IoError, "cannot open " + json_path.string());
  json j;
  jin >> j;
  Recording rec;
  rec.recording_id = j.at("recording_id").get<int>();
  rec.location_id = j.at("location_id").get<int>();
  rec.f_s = j.at("f_s").get<double>();
  rec.geometry = geometry_from(j.at("lane_geometry"));

  std::map<int, Track> tracks;
  for (const auto& tj : j.at("tracks")) {
    Track t;
    t.track_id = tj.at("track_id").get<int>();
    t.location_id = rec.location_id;
    t.direction = static_cast<DrivingDirection>(tj.at("direction").get<int>());
    t.vehicle_class = parse_vehicle_class(tj.at("vehicle_class").get<std::string>());
    t.length = tj.at("length").get<double>();
    t.width = tj.at("width").get<double>();
    if (!tj.at("speed_limit").is_null()) t.speed_limit = tj.at("speed_limit").get<double>();
    tracks[t.track_id] = std::move(t);
  }

  csv::Reader reader(csv_path);
  const auto header = normalized_header();
  std::vector<std::size_t> cols;
  for (const auto& h : header) {
    auto c = reader.column(h);
    if (!c) throw Error(ErrorCode::MissingColumn, csv_path.string() + " lacks column '" + h + "'", {h});
    cols.push_back(*c);
  }
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::RowParseError, csv_path.string() + " line " + std::to_string(reader.line()) + ": " + what,
                {std::to_string(reader.line())});
  };
  std::vector<std::string_view> row;
  while (reader.next(row)) {
    if (row.size() < header.size()) fail("too few fields");
    auto cell = [&](std::size_t i) { return row[cols[i]]; };
    auto num = [&](std::size_t i) {
      auto v = csv::parse_double(cell(i));
      if (!v) fail("bad number in " + header[i]);
      return *v;
    };
    auto optnum = [&](std::size_t i) -> std::optional<double> {
      if (cell(i).empty()) return std::nullopt;
      return num(i);
    };
    const int tid = static_cast<int>(num(2));
    auto it = tracks.find(tid);
    if (it == tracks.end()) fail("track " + std::to_string(tid) + " missing from sidecar");
    Frame f;
    f.frame_index = static_cast<std::int64_t>(num(3));
    f.t = num(4);
    f.x = num(5);
    f.y = num(6);
    f.vx = num(7);
    f.vy = num(8);
    f.ax = num(9);
    f.ay = num(10);
    f.lat_velocity = num(11);
    if (auto lane = optnum(12)) f.lane_id = static_cast<int>(*lane);
    f.heading = num(13);
    f.yaw_rate = num(14);
    f.dhw = optnum(15);
    f.thw = optnum(16);
    f.ttc = optnum(17);
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      const std::size_t base = 18 + 4 * s;
      if (auto nid = optnum(base)) {
        auto& slot = f.neighbors.slots[s];
        slot.track_id = static_cast<int>(*nid);
        slot.gap = num(base + 1);
        slot.delta_v = num(base + 2);
        slot.delta_a = num(base + 3);
      }
    }
    it->second.frames.push_back(f);
  }
  for (auto& [id, t] : tracks) {
    if (t.frames.empty()) continue;
    const double f_s = rec.f_s;
    std::vector<double> times;
    times.reserve(t.frames.size());
    for (const auto& f : t.frames) times.push_back(f.t);
    auto vt = validate_track(std::move(t), f_s);
    // Keep stored times bit-exact.
    auto& frames = TrackEditor::frames(vt);
    for (std::size_t k = 0; k < frames.size() && k < times.size(); ++k) frames[k].t = times[k];
    assign_lateral_offsets(vt, rec.geometry);
    rec.tracks.push_back(std::move(vt));
  }
  return rec;
}

std::vector<Recording> load_normalized_dir(const std::filesystem::path& dir) {
  static const std::regex pattern(R"(recording_(\d+)\.csv)");
  std::vector<int> ids;
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::IoError, dir.string() + " is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) ids.push_back(std::stoi(m[1]));
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Recording> out;
  for (int id : ids) out.push_back(read_normalized(csv_name(dir, id), json_name(dir, id)));
  return out;
}

}  // namespace lcp
