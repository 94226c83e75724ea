#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lcp/error.hpp"
#include "lcp/ingestion.hpp"
#include "lcp/random.hpp"
#include "lcp/trajectory.hpp"

namespace lcp::test {

// Asserts that `expr` throws lcp::Error with the given code.
#define EXPECT_LCP_ERROR(expr, errc)                                              \
  do {                                                                           \
    bool caught_ = false;                                                        \
    try {                                                                        \
      (void)(expr);                                                              \
    } catch (const ::lcp::Error& e_) {                                           \
      caught_ = true;                                                            \
      EXPECT_EQ(e_.code(), errc) << e_.what();                                   \
    }                                                                            \
    EXPECT_TRUE(caught_) << "expected " << ::lcp::to_string(errc);               \
  } while (0)

inline constexpr double kFs = 25.0;

// Three 3.7 m lanes for Dir1, ids 1..3 from the right.
inline LaneGeometry three_lanes(double width = 3.7) {
  LaneGeometry g;
  g.lanes[DrivingDirection::Dir1] = lanes_from_boundaries({0.0, width, 2 * width, 3 * width}, 1, 1);
  return g;
}

// Straight track along x at speed v; lateral position y(f) and its derivative
// supplied by the caller. lane_id follows the geometry.
inline Track make_track(int id, std::int64_t first, std::int64_t count, const std::function<double(std::int64_t)>& y,
                        const std::function<double(std::int64_t)>& vy, const LaneGeometry& geom, double v = 30.0) {
  Track t;
  t.track_id = id;
  t.direction = DrivingDirection::Dir1;
  for (std::int64_t f = first; f < first + count; ++f) {
    Frame fr;
    fr.frame_index = f;
    fr.t = static_cast<double>(f) / kFs;
    fr.x = v * fr.t;
    fr.vx = v;
    fr.y = y(f);
    fr.vy = vy(f);
    fr.lat_velocity = fr.vy;
    if (const Lane* l = geom.lane_at(DrivingDirection::Dir1, fr.y)) fr.lane_id = l->lane_id;
    t.frames.push_back(fr);
  }
  return t;
}

inline ValidatedTrack validated(Track t, const LaneGeometry& geom) {
  auto vt = validate_track(std::move(t), kFs);
  assign_lateral_offsets(vt, geom);
  return vt;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lcp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lcp::test
