#include "lcp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lcp/error.hpp"
#include "lcp/random.hpp"

namespace lcp {

using json = nlohmann::json;

double transition_shape(TransitionShape shape, double u) {
  u = std::clamp(u, 0.0, 1.0);
  if (shape == TransitionShape::Linear) return u;
  return u * u * (3.0 - 2.0 * u);
}

namespace {

double shape_d1(TransitionShape shape, double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return shape == TransitionShape::Linear ? 1.0 : 6.0 * u * (1.0 - u);
}

double shape_d2(TransitionShape shape, double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return shape == TransitionShape::Linear ? 0.0 : 6.0 - 12.0 * u;
}

int side_of(Maneuver m) { return m == Maneuver::LLC ? 1 : -1; }

double exit_time(const ScenarioSpec& s, const VehicleScript& v) { return v.exit_time.value_or(s.duration); }

std::int64_t first_frame_at(double t, double f_s) { return static_cast<std::int64_t>(std::ceil(t * f_s - 1e-9)); }
std::int64_t last_frame_at(double t, double f_s) { return static_cast<std::int64_t>(std::floor(t * f_s + 1e-9)); }

// Noise-free kinematic state.
struct State {
  double x, y, vx, vy, ax, ay;
};

class Kinematics {
 public:
  Kinematics(const ScenarioSpec& s, const VehicleScript& v) : s_(s), v_(v) {
    start_ = v_.enter_time;
    base_ = integral(start_);
  }

  State at(double t) const {
    State st{};
    st.vx = v_.v0;
    st.ax = 0.0;
    for (const auto& c : v_.speed_changes) {
      const double u = (t - c.start_time) / c.duration;
      st.vx += c.delta_v * std::clamp(u, 0.0, 1.0);
      if (u > 0.0 && u < 1.0) st.ax += c.delta_v / c.duration;
    }
    st.x = v_.x0 + v_.v0 * (t - start_) + integral(t) - base_;
    st.y = (v_.start_lane + 0.5) * s_.lane_width;
    st.vy = 0.0;
    st.ay = 0.0;
    for (const auto& c : v_.changes) {
      const double u = (t - c.start_time) / c.duration;
      const double w = side_of(c.direction) * s_.lane_width;
      st.y += w * transition_shape(s_.shape, u);
      st.vy += w * shape_d1(s_.shape, u) / c.duration;
      st.ay += w * shape_d2(s_.shape, u) / (c.duration * c.duration);
    }
    return st;
  }

 private:
  // Position contribution of the speed ramps from -inf to t.
  double integral(double t) const {
    double sum = 0.0;
    for (const auto& c : v_.speed_changes) {
      const double r = t - c.start_time;
      if (r <= 0.0) continue;
      if (r < c.duration) sum += c.delta_v * r * r / (2.0 * c.duration);
      else sum += c.delta_v * (c.duration / 2.0 + (r - c.duration));
    }
    return sum;
  }

  const ScenarioSpec& s_;
  const VehicleScript& v_;
  double start_ = 0.0;
  double base_ = 0.0;
};

}  // namespace

double transition_inverse(TransitionShape shape, double offset, double width) {
  const double target = offset / width;
  if (target <= 0.0) return 0.0;
  if (target >= 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (transition_shape(shape, mid) < target ? lo : hi) = mid;
  }
  return hi;
}

void ScenarioSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (lanes < 1) bad("scenario needs at least one lane");
  if (!(lane_width > 0) || !(duration > 0) || !(f_s > 0)) bad("lane width, duration and f_s must be positive");
  if (pos_noise < 0 || vel_noise < 0 || accel_noise < 0) bad("noise levels must be non-negative");
  std::set<int> ids;
  for (const auto& v : vehicles) {
    const std::string who = "vehicle " + std::to_string(v.track_id);
    if (!ids.insert(v.track_id).second) bad("duplicate track id " + std::to_string(v.track_id));
    if (v.start_lane < 0 || v.start_lane >= lanes) bad(who + " starts off the road");
    const double end = exit_time(*this, v);
    if (!(end > v.enter_time) || v.enter_time < 0 || end > duration + 1e-9) bad(who + " has an invalid lifetime");
    for (const auto& c : v.speed_changes)
      if (!(c.duration > 0)) bad(who + " has a speed change with non-positive duration");
    int lane = v.start_lane;
    double free_from = v.enter_time;
    for (const auto& c : v.changes) {
      if (c.direction == Maneuver::NLC) bad(who + " scripts an NLC change");
      if (!(c.duration > 0)) bad(who + " has a change with non-positive duration");
      if (c.start_time < free_from - 1e-9 || c.start_time + c.duration > end + 1e-9)
        bad(who + " has a change outside its lifetime or overlapping another change");
      lane += side_of(c.direction);
      if (lane < 0 || lane >= lanes) bad(who + " changes off the road");
      free_from = c.start_time + c.duration;
    }
  }
}

SyntheticRecording generate_recording(const ScenarioSpec& spec, std::uint64_t seed, double crossing_threshold) {
  spec.validate();
  const double f_s = spec.f_s;

  std::vector<double> bounds;
  for (int i = 0; i <= spec.lanes; ++i) bounds.push_back(i * spec.lane_width);
  Recording rec;
  rec.recording_id = spec.recording_id;
  rec.location_id = spec.location_id;
  rec.f_s = f_s;
  rec.geometry.lanes[spec.direction] = lanes_from_boundaries(bounds, 1, 1);
  rec.geometry.ramps = spec.ramps;
  const auto& lanes = rec.geometry.lanes_for(spec.direction);

  struct Body {
    std::int64_t first, last;
    std::vector<State> clean;
    std::vector<Frame> frames;
  };
  std::vector<Body> bodies(spec.vehicles.size());

  SyntheticRecording out;
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    const auto& v = spec.vehicles[i];
    const Kinematics kin(spec, v);
    auto& b = bodies[i];
    b.first = first_frame_at(v.enter_time, f_s);
    b.last = last_frame_at(exit_time(spec, v), f_s);
    Rng rng(derive_seed(seed, "noise/" + std::to_string(v.track_id)));
    auto noisy = [&](double value, double sigma) { return sigma > 0.0 ? value + sigma * rng.normal() : value; };
    for (auto k = b.first; k <= b.last; ++k) {
      const State s = kin.at(static_cast<double>(k) / f_s);
      b.clean.push_back(s);
      Frame f;
      f.frame_index = k;
      f.x = noisy(s.x, spec.pos_noise);
      f.y = noisy(s.y, spec.pos_noise);
      f.vx = noisy(s.vx, spec.vel_noise);
      f.vy = noisy(s.vy, spec.vel_noise);
      f.ax = noisy(s.ax, spec.accel_noise);
      f.ay = noisy(s.ay, spec.accel_noise);
      f.lat_velocity = f.vy;
      f.heading = std::atan2(f.vy, f.vx);
      const double v2 = f.vx * f.vx + f.vy * f.vy;
      f.yaw_rate = v2 > 0.0 ? (f.vx * f.ay - f.vy * f.ax) / v2 : 0.0;
      if (const Lane* lane = rec.geometry.lane_at(spec.direction, s.y)) f.lane_id = lane->lane_id;
      b.frames.push_back(f);
    }

    // Truth events from the noise-free lateral profile.
    int lane_idx = v.start_lane;
    for (const auto& c : v.changes) {
      const int side = side_of(c.direction);
      const Lane& home = lanes[static_cast<std::size_t>(lane_idx)];
      const Lane& target = lanes[static_cast<std::size_t>(lane_idx + side)];
      LaneChangeEvent e;
      e.track_id = v.track_id;
      e.direction = c.direction;
      bool started = false, ended = false;
      for (std::size_t m = 0; m < b.clean.size() && !ended; ++m) {
        const double t = static_cast<double>(b.first + static_cast<std::int64_t>(m)) / f_s;
        if (t < c.start_time) continue;
        const double y = b.clean[m].y;
        if (!started && side * (y - home.center) > crossing_threshold) {
          e.start_frame = b.first + static_cast<std::int64_t>(m);
          started = true;
        }
        if (started && target.strictly_contains(y)) {
          e.end_frame = b.first + static_cast<std::int64_t>(m);
          ended = true;
        }
      }
      if (ended) out.truth.push_back(e);
      lane_idx += side;
    }
  }

  // Overlap check on noise-free bodies, frame by frame.
  std::int64_t lo = 0, hi = -1;
  for (const auto& b : bodies) {
    if (b.clean.empty()) continue;
    lo = hi < lo ? b.first : std::min(lo, b.first);
    hi = std::max(hi, b.last);
  }
  double max_len = 0.0;
  for (const auto& v : spec.vehicles) max_len = std::max(max_len, v.length);
  std::vector<std::size_t> present;
  for (auto k = lo; k <= hi; ++k) {
    present.clear();
    for (std::size_t i = 0; i < bodies.size(); ++i)
      if (k >= bodies[i].first && k <= bodies[i].last) present.push_back(i);
    auto st = [&](std::size_t i) -> const State& { return bodies[i].clean[static_cast<std::size_t>(k - bodies[i].first)]; };
    std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) { return st(a).x < st(b).x; });
    for (std::size_t p = 0; p < present.size(); ++p) {
      for (std::size_t q = p + 1; q < present.size(); ++q) {
        const auto& a = spec.vehicles[present[p]];
        const auto& b = spec.vehicles[present[q]];
        const double dx = st(present[q]).x - st(present[p]).x;
        if (dx >= max_len) break;
        const double dy = std::abs(st(present[q]).y - st(present[p]).y);
        if (dx < (a.length + b.length) / 2.0 - spec.overlap_tolerance &&
            dy < (a.width + b.width) / 2.0 - spec.overlap_tolerance)
          throw Error(ErrorCode::InfeasibleScript,
                      "vehicles " + std::to_string(a.track_id) + " and " + std::to_string(b.track_id) +
                          " overlap at frame " + std::to_string(k),
                      {std::to_string(a.track_id), std::to_string(b.track_id), std::to_string(k)});
      }
    }
  }

  // Neighbor slots from the emitted (noisy) frames.
  for (auto k = lo; k <= hi; ++k) {
    present.clear();
    for (std::size_t i = 0; i < bodies.size(); ++i)
      if (k >= bodies[i].first && k <= bodies[i].last) present.push_back(i);
    auto fr = [&](std::size_t i) -> Frame& { return bodies[i].frames[static_cast<std::size_t>(k - bodies[i].first)]; };
    for (std::size_t e : present) {
      Frame& ego = fr(e);
      if (!ego.lane_id) continue;
      const auto& ev = spec.vehicles[e];
      for (int rel = -1; rel <= 1; ++rel) {
        const int lane = *ego.lane_id + rel;
        const Slot lead_slot = rel == 0 ? Slot::EgoLead : rel > 0 ? Slot::LeftLead : Slot::RightLead;
        const Slot rear_slot = rel == 0 ? Slot::EgoRear : rel > 0 ? Slot::LeftRear : Slot::RightRear;
        std::optional<std::size_t> lead, rear;
        for (std::size_t o : present) {
          if (o == e) continue;
          const Frame& of = fr(o);
          if (of.lane_id != lane) continue;
          if (of.x > ego.x) {
            if (!lead || of.x < fr(*lead).x) lead = o;
          } else if (!rear || of.x > fr(*rear).x) {
            rear = o;
          }
        }
        auto fill = [&](std::optional<std::size_t> o, Slot slot) {
          if (!o) return;
          const Frame& of = fr(*o);
          auto& s = ego.neighbors[slot];
          s.track_id = spec.vehicles[*o].track_id;
          s.gap = std::max(0.0, std::abs(of.x - ego.x) - (spec.vehicles[*o].length + ev.length) / 2.0);
          s.delta_v = of.vx - ego.vx;
          s.delta_a = of.ax - ego.ax;
        };
        fill(lead, lead_slot);
        fill(rear, rear_slot);
      }
      const auto& lead = ego.neighbors[Slot::EgoLead];
      if (lead.occupied()) {
        ego.dhw = lead.gap;
        if (ego.vx > 0.0) ego.thw = lead.gap / ego.vx;
        if (lead.delta_v < 0.0) ego.ttc = lead.gap / -lead.delta_v;
      }
    }
  }

  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    const auto& v = spec.vehicles[i];
    if (bodies[i].frames.empty()) continue;
    Track t;
    t.track_id = v.track_id;
    t.location_id = spec.location_id;
    t.direction = spec.direction;
    t.vehicle_class = v.vehicle_class;
    t.length = v.length;
    t.width = v.width;
    t.speed_limit = spec.speed_limit;
    t.frames = std::move(bodies[i].frames);
    auto vt = validate_track(std::move(t), f_s);
    assign_lateral_offsets(vt, rec.geometry);
    rec.tracks.push_back(std::move(vt));
  }
  std::sort(out.truth.begin(), out.truth.end(), [](const LaneChangeEvent& a, const LaneChangeEvent& b) {
    return std::tie(a.track_id, a.start_frame) < std::tie(b.track_id, b.start_frame);
  });
  out.recording = std::move(rec);
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto& [k, v] : j.items())
    if (!known.count(k)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + k + "' in " + where, {k});
}

}  // namespace

ScenarioSpec scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  reject_unknown(j,
                 {"recording_id", "location_id", "lanes", "lane_width", "duration", "f_s", "direction", "speed_limit",
                  "ramps", "vehicles", "shape", "pos_noise", "vel_noise", "accel_noise", "overlap_tolerance"},
                 "scenario");
  ScenarioSpec s;
  s.recording_id = j.value("recording_id", s.recording_id);
  s.location_id = j.value("location_id", s.location_id);
  s.lanes = j.value("lanes", s.lanes);
  s.lane_width = j.value("lane_width", s.lane_width);
  s.duration = j.value("duration", s.duration);
  s.f_s = j.value("f_s", s.f_s);
  s.direction = j.value("direction", 1) == 2 ? DrivingDirection::Dir2 : DrivingDirection::Dir1;
  if (j.contains("speed_limit") && !j["speed_limit"].is_null()) s.speed_limit = j["speed_limit"].get<double>();
  s.shape = j.value("shape", std::string("smoothstep")) == "linear" ? TransitionShape::Linear : TransitionShape::Smoothstep;
  s.pos_noise = j.value("pos_noise", s.pos_noise);
  s.vel_noise = j.value("vel_noise", s.vel_noise);
  s.accel_noise = j.value("accel_noise", s.accel_noise);
  s.overlap_tolerance = j.value("overlap_tolerance", s.overlap_tolerance);
  for (const auto& r : j.value("ramps", json::array())) {
    Ramp ramp;
    ramp.kind = r.at("kind").get<std::string>() == "exit" ? RampKind::Exit : RampKind::Entry;
    ramp.direction = r.value("direction", 1) == 2 ? DrivingDirection::Dir2 : DrivingDirection::Dir1;
    ramp.station = r.at("station").get<double>();
    s.ramps.push_back(ramp);
  }
  for (const auto& vj : j.value("vehicles", json::array())) {
    reject_unknown(vj,
                   {"track_id", "class", "length", "width", "start_lane", "x0", "v0", "enter_time", "exit_time",
                    "speed_changes", "changes"},
                   "vehicle");
    VehicleScript v;
    v.track_id = vj.at("track_id").get<int>();
    v.vehicle_class = parse_vehicle_class(vj.value("class", std::string("car")));
    v.length = vj.value("length", v.length);
    v.width = vj.value("width", v.width);
    v.start_lane = vj.value("start_lane", v.start_lane);
    v.x0 = vj.value("x0", v.x0);
    v.v0 = vj.value("v0", v.v0);
    v.enter_time = vj.value("enter_time", v.enter_time);
    if (vj.contains("exit_time") && !vj["exit_time"].is_null()) v.exit_time = vj["exit_time"].get<double>();
    for (const auto& cj : vj.value("speed_changes", json::array()))
      v.speed_changes.push_back({cj.at("start_time").get<double>(), cj.value("duration", 1.0),
                                 cj.at("delta_v").get<double>()});
    for (const auto& cj : vj.value("changes", json::array()))
      v.changes.push_back({cj.at("start_time").get<double>(), parse_maneuver(cj.at("direction").get<std::string>()),
                           cj.value("duration", 3.0)});
    s.vehicles.push_back(v);
  }
  s.validate();
  return s;
}

std::string scenario_to_json(const ScenarioSpec& s) {
  json j;
  j["recording_id"] = s.recording_id;
  j["location_id"] = s.location_id;
  j["lanes"] = s.lanes;
  j["lane_width"] = s.lane_width;
  j["duration"] = s.duration;
  j["f_s"] = s.f_s;
  j["direction"] = static_cast<int>(s.direction);
  j["speed_limit"] = s.speed_limit ? json(*s.speed_limit) : json(nullptr);
  j["shape"] = s.shape == TransitionShape::Linear ? "linear" : "smoothstep";
  j["pos_noise"] = s.pos_noise;
  j["vel_noise"] = s.vel_noise;
  j["accel_noise"] = s.accel_noise;
  j["overlap_tolerance"] = s.overlap_tolerance;
  j["ramps"] = json::array();
  for (const auto& r : s.ramps)
    j["ramps"].push_back({{"kind", r.kind == RampKind::Exit ? "exit" : "entry"},
                          {"direction", static_cast<int>(r.direction)},
                          {"station", r.station}});
  j["vehicles"] = json::array();
  for (const auto& v : s.vehicles) {
    json vj;
    vj["track_id"] = v.track_id;
    vj["class"] = std::string(to_string(v.vehicle_class));
    vj["length"] = v.length;
    vj["width"] = v.width;
    vj["start_lane"] = v.start_lane;
    vj["x0"] = v.x0;
    vj["v0"] = v.v0;
    vj["enter_time"] = v.enter_time;
    vj["exit_time"] = v.exit_time ? json(*v.exit_time) : json(nullptr);
    vj["speed_changes"] = json::array();
    for (const auto& c : v.speed_changes)
      vj["speed_changes"].push_back({{"start_time", c.start_time}, {"duration", c.duration}, {"delta_v", c.delta_v}});
    vj["changes"] = json::array();
    for (const auto& c : v.changes)
      vj["changes"].push_back(
          {{"start_time", c.start_time}, {"direction", std::string(to_string(c.direction))}, {"duration", c.duration}});
    j["vehicles"].push_back(vj);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Benchmark scenarios
// ---------------------------------------------------------------------------

ScenarioSpec benchmark_scenario(int recording_id, int location_id, std::uint64_t seed, const BenchmarkOptions& opt) {
  ScenarioSpec s;
  s.recording_id = recording_id;
  s.location_id = location_id;
  s.duration = opt.duration;
  s.f_s = opt.f_s;
  s.pos_noise = opt.pos_noise;
  s.vel_noise = opt.vel_noise;
  s.accel_noise = opt.accel_noise;
  Rng rng(derive_seed(seed, "benchmark/" + std::to_string(recording_id)));
  const double cross_u = transition_inverse(s.shape, 0.2, s.lane_width);
  for (int i = 0; i < opt.vehicles; ++i) {
    VehicleScript v;
    v.track_id = i + 1;
    const double r = rng.uniform();
    if (r < 0.15) {
      v.vehicle_class = VehicleClass::Truck;
      v.length = 12.0;
      v.width = 2.5;
    } else if (r < 0.2) {
      v.vehicle_class = VehicleClass::Other;
    }
    v.start_lane = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.lanes)));
    v.x0 = i * opt.spacing;
    v.v0 = opt.speed;
    int lane = v.start_lane;
    if (rng.uniform() < opt.change_probability) {
      double t = opt.first_change + rng.uniform(0.0, 6.0);
      while (t + opt.transition + 5.0 < opt.duration) {
        const bool can_left = lane + 1 < s.lanes;
        const bool can_right = lane > 0;
        Maneuver dir = can_left && (!can_right || rng.uniform() < 0.5) ? Maneuver::LLC : Maneuver::RLC;
        const int sign = dir == Maneuver::LLC ? 1 : -1;
        v.changes.push_back({t, dir, opt.transition});
        const double crossing = t + cross_u * opt.transition;
        const double dv = sign * opt.cue_accel * opt.cue_lead;
        v.speed_changes.push_back({crossing - opt.cue_lead, opt.cue_lead, dv});
        v.speed_changes.push_back({t + opt.transition + 2.0, 10.0, -dv});
        lane += sign;
        if (rng.uniform() < 0.5) break;
        t += opt.min_change_gap + rng.uniform(0.0, 10.0);
      }
    }
    s.vehicles.push_back(v);
  }
  return s;
}

std::vector<SyntheticRecording> benchmark_dataset(const std::vector<int>& locations, std::uint64_t seed,
                                                  const BenchmarkOptions& opt) {
  std::vector<SyntheticRecording> out(locations.size());
  const auto n = static_cast<std::ptrdiff_t>(locations.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto idx = static_cast<std::size_t>(i);
      const int rid = static_cast<int>(i) + 1;
      out[idx] = generate_recording(benchmark_scenario(rid, locations[idx], seed, opt),
                                    derive_seed(seed, "recording/" + std::to_string(rid)));
    } catch (...) {
#pragma omp critical(lcp_synth_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void write_truth_csv(const std::vector<LaneChangeEvent>& truth, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "track_id,start_frame,end_frame,direction\n";
  for (const auto& e : truth)
    out << e.track_id << ',' << e.start_frame << ',' << e.end_frame << ',' << to_string(e.direction) << '\n';
}

}  // namespace lcp
