#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "lcp/features.hpp"
#include "lcp/io.hpp"
#include "lcp/pipeline.hpp"
#include "lcp/synthgen.hpp"
#include "support.hpp"

using namespace lcp;
using namespace lcp::test;
namespace fs = std::filesystem;

namespace {

struct ToyFiles {
  fs::path meta, tracks_meta, tracks;
};

// Three highD-style tracks on the lower carriageway (driving direction 2),
// 10 frames each. Track 2 drives 50 m ahead of track 1 in lane 5, track 3
// is in lane 6. Positions are bounding-box top-left corners in image axes.
ToyFiles write_toy_highd(const fs::path& dir, bool drop_lane_column = false, const std::string& speed_unit_scale = "1") {
  ToyFiles f{dir / "01_recordingMeta.csv", dir / "01_tracksMeta.csv", dir / "01_tracks.csv"};
  std::ofstream(f.meta) << "id,frameRate,locationId,speedLimit,upperLaneMarkings,lowerLaneMarkings\n"
                        << "1,25,2,-1,8;11.7;15.4,20;23.7;27.4\n";
  std::ofstream(f.tracks_meta) << "id,width,height,class,drivingDirection\n"
                               << "1,4.5,1.8,Car,2\n2,4.5,1.8,Car,2\n3,12,2.5,Truck,2\n";
  std::ofstream tr(f.tracks);
  tr << "frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,dhw,thw,ttc,precedingId,"
        "followingId,leftPrecedingId,leftFollowingId,rightPrecedingId,rightFollowingId"
     << (drop_lane_column ? "" : ",laneId") << "\n";
  const double scale = std::stod(speed_unit_scale);
  for (int id = 1; id <= 3; ++id) {
    const double len = id == 3 ? 12.0 : 4.5;
    const double h = id == 3 ? 2.5 : 1.8;
    const double cy = id == 3 ? 25.55 : 21.85;
    const double x0 = id == 1 ? 100.0 : id == 2 ? 150.0 : 120.0;
    const double v = 25.0;
    for (int k = 0; k < 10; ++k) {
      const double cx = x0 + v * k / 25.0;
      const int preceding = id == 1 ? 2 : 0;
      const int following = id == 2 ? 1 : 0;
      // lane 6 is to the right of lane 5 for direction 2
      const int right_preceding = id == 1 || id == 2 ? 3 : 0;
      const int lane = id == 3 ? 6 : 5;
      tr << k << ',' << id << ',' << cx - len / 2 << ',' << cy - h / 2 << ',' << len << ',' << h << ','
         << v * scale << ",0,0,0," << (preceding ? 45.5 : 0) << ',' << (preceding ? 1.82 : 0) << ",0,"
         << preceding << ',' << following << ",0,0," << (id == 1 ? 3 : 0) << ',' << (id == 2 ? 3 : 0);
      (void)right_preceding;
      if (!drop_lane_column) tr << ',' << lane;
      tr << '\n';
    }
  }
  return f;
}

ColumnMapping highd_mapping() { return default_column_mapping(DatasetProfile::HighD, kDefaultDataDir); }

}  // namespace

TEST(LaneGeometryBuild, MidpointCenters) {
  const auto lanes = lanes_from_boundaries({0.0, 3.7, 7.4}, 1, 1);
  ASSERT_EQ(lanes.size(), 2u);
  EXPECT_DOUBLE_EQ(lanes[0].center, 1.85);
  EXPECT_DOUBLE_EQ(lanes[1].center, 5.55);
  RecordingMeta meta;
  meta.upper_markings = {0.0, 3.7, 7.4};
  const auto g = build_lane_geometry(meta, DatasetProfile::Custom);
  ASSERT_EQ(g.lanes_for(DrivingDirection::Dir1).size(), 2u);
  EXPECT_DOUBLE_EQ(g.lanes_for(DrivingDirection::Dir1)[1].center, 5.55);
}

TEST(LaneGeometryBuild, Errors) {
  EXPECT_LCP_ERROR(lanes_from_boundaries({1.0}, 1, 1), ErrorCode::FewerThanTwoBoundaries);
  EXPECT_LCP_ERROR(lanes_from_boundaries({0.0, 3.7, 3.5}, 1, 1), ErrorCode::OverlappingLanes);
  RecordingMeta meta;
  meta.upper_markings = {4.0};
  EXPECT_LCP_ERROR(build_lane_geometry(meta, DatasetProfile::HighD), ErrorCode::FewerThanTwoBoundaries);
  meta.upper_markings = {0.0, 3.7, 3.5};
  EXPECT_LCP_ERROR(build_lane_geometry(meta, DatasetProfile::HighD), ErrorCode::OverlappingLanes);
}

TEST(LaneGeometryBuild, HighdNumbering) {
  RecordingMeta meta;
  meta.upper_markings = {8.0, 11.7, 15.4};
  meta.lower_markings = {20.0, 23.7, 27.4};
  const auto g = build_lane_geometry(meta, DatasetProfile::HighD);
  // upper carriageway: ids 2, 3 with the id growing toward larger image y
  const auto& up = g.lanes_for(DrivingDirection::Dir1);
  ASSERT_EQ(up.size(), 2u);
  EXPECT_EQ(up[0].lane_id, 2);
  EXPECT_EQ(up[1].lane_id, 3);
  // lower carriageway mirrored: the bottom lane (6) is the rightmost
  const auto& low = g.lanes_for(DrivingDirection::Dir2);
  ASSERT_EQ(low.size(), 2u);
  EXPECT_EQ(low[0].lane_id, 6);
  EXPECT_EQ(low[1].lane_id, 5);
  EXPECT_DOUBLE_EQ(low[0].center, -25.55);
}

TEST(LoadRecording, ToyHighdSet) {
  const auto dir = temp_dir("ingest_toy");
  const auto f = write_toy_highd(dir);
  const auto rec = load_recording(f.meta, f.tracks_meta, f.tracks, highd_mapping());
  EXPECT_EQ(rec.recording_id, 1);
  EXPECT_EQ(rec.location_id, 2);
  EXPECT_EQ(rec.f_s, 25.0);
  ASSERT_EQ(rec.tracks.size(), 3u);
  for (const auto& t : rec.tracks) {
    EXPECT_EQ(t.track().location_id, 2);
    EXPECT_EQ(t.frames().size(), 10u);
    EXPECT_FALSE(t.track().speed_limit.has_value());  // -1 sentinel
  }
  const auto* t1 = rec.find(1);
  ASSERT_NE(t1, nullptr);
  const Frame& fr = t1->at(3);
  // direction 2 travels toward +x; y is mirrored so the driver's left is +y
  EXPECT_NEAR(fr.vx, 25.0, 1e-12);
  EXPECT_NEAR(fr.x, 100.0 + 25.0 * 3 / 25.0, 1e-9);
  EXPECT_NEAR(fr.y, -21.85, 1e-9);
  EXPECT_EQ(fr.lane_id, 5);
  EXPECT_NEAR(fr.lateral_offset, 0.0, 1e-9);
  EXPECT_NEAR(fr.t, 3.0 / 25.0, 1e-9);
  // ego lead is track 2: 50 m between centers minus half of both lengths
  ASSERT_TRUE(fr.neighbors[Slot::EgoLead].occupied());
  EXPECT_EQ(*fr.neighbors[Slot::EgoLead].track_id, 2);
  EXPECT_NEAR(fr.neighbors[Slot::EgoLead].gap, 50.0 - 4.5, 1e-9);
  EXPECT_FALSE(fr.neighbors[Slot::EgoRear].occupied());
  ASSERT_TRUE(fr.neighbors[Slot::RightLead].occupied());
  EXPECT_EQ(*fr.neighbors[Slot::RightLead].track_id, 3);
  // 0 in ttc is the dataset's "no value" sentinel
  EXPECT_FALSE(fr.ttc.has_value());
  ASSERT_TRUE(fr.dhw.has_value());
  EXPECT_DOUBLE_EQ(*fr.dhw, 45.5);
  EXPECT_EQ(rec.find(3)->track().vehicle_class, VehicleClass::Truck);
}

TEST(LoadRecording, NeighborIdsExistInRecording) {
  const auto dir = temp_dir("ingest_nbr");
  const auto f = write_toy_highd(dir);
  const auto rec = load_recording(f.meta, f.tracks_meta, f.tracks, highd_mapping());
  for (const auto& t : rec.tracks)
    for (const auto& fr : t.frames())
      for (const auto& s : fr.neighbors.slots)
        if (s.occupied()) {
          ASSERT_NE(rec.find(*s.track_id), nullptr);
          EXPECT_GE(s.gap, 0.0);
        }
}

TEST(LoadRecording, MissingLaneColumn) {
  const auto dir = temp_dir("ingest_missing");
  const auto f = write_toy_highd(dir, true);
  try {
    load_recording(f.meta, f.tracks_meta, f.tracks, highd_mapping());
    FAIL() << "expected MissingColumn";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingColumn);
    ASSERT_FALSE(e.details().empty());
    EXPECT_EQ(e.details()[0], "laneId");
  }
}

TEST(LoadRecording, KmhConversion) {
  EXPECT_NEAR(parse_conversion(R"({"unit":"km/h"})").scale * 90.0, 25.0, 1e-12);
  EXPECT_LCP_ERROR(parse_conversion(R"({"unit":"furlong/fortnight"})"), ErrorCode::UnitError);

  const auto dir = temp_dir("ingest_kmh");
  const auto f = write_toy_highd(dir, false, "3.6");  // speeds written in km/h: 25 m/s -> 90
  auto text = read_text_file(kDefaultDataDir / "mappings" / "highd.json");
  text.replace(text.find("\"conversions\": {}"), 17, R"("conversions": {"vx": {"unit": "km/h"}})");
  write_text_file(dir / "kmh.json", text);
  const auto rec = load_recording(f.meta, f.tracks_meta, f.tracks, load_column_mapping(dir / "kmh.json"));
  EXPECT_NEAR(rec.find(1)->at(0).vx, 25.0, 1e-12);
}

TEST(LoadRecording, RowParseError) {
  const auto dir = temp_dir("ingest_bad_row");
  const auto f = write_toy_highd(dir);
  std::ofstream(f.tracks, std::ios::app) << "10,1,abc,20,4.5,1.8,25,0,0,0,0,0,0,2,0,0,0,3,0,5\n";
  EXPECT_LCP_ERROR(load_recording(f.meta, f.tracks_meta, f.tracks, highd_mapping()), ErrorCode::RowParseError);
}

TEST(LoadRecording, MappingRequiresLaneId) {
  auto m = highd_mapping();
  m.tracks.erase("lane_id");
  EXPECT_LCP_ERROR(m.validate(), ErrorCode::MissingColumn);
}

TEST(NormalizedFormat, HeaderIsFixed) {
  const auto h = normalized_header();
  const std::vector<std::string> head{"recording_id", "location_id", "track_id", "frame", "t",   "x",
                                      "y",            "vx",          "vy",       "ax",    "ay",  "lat_velocity",
                                      "lane_id",      "heading",     "yaw_rate", "dhw",   "thw", "ttc"};
  ASSERT_EQ(h.size(), head.size() + 24);
  for (std::size_t i = 0; i < head.size(); ++i) EXPECT_EQ(h[i], head[i]);
  EXPECT_EQ(h[head.size()], "ego_lead_id");
}

TEST(NormalizedFormat, RoundTripIsExact) {
  BenchmarkOptions opt;
  opt.vehicles = 8;
  opt.duration = 20;
  auto syn = generate_recording(benchmark_scenario(3, 1, 11, opt), 11);
  const auto& a = syn.recording;
  const auto dir = temp_dir("normalized_rt");
  write_normalized(a, dir);
  const auto all = load_normalized_dir(dir);
  ASSERT_EQ(all.size(), 1u);
  const auto& b = all[0];
  EXPECT_EQ(b.recording_id, a.recording_id);
  EXPECT_EQ(b.location_id, a.location_id);
  EXPECT_EQ(b.f_s, a.f_s);
  EXPECT_EQ(geometry_to_json(b.geometry), geometry_to_json(a.geometry));
  ASSERT_EQ(b.tracks.size(), a.tracks.size());
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    const auto& ta = a.tracks[i];
    const auto& tb = b.tracks[i];
    EXPECT_EQ(tb.id(), ta.id());
    EXPECT_EQ(tb.track().vehicle_class, ta.track().vehicle_class);
    EXPECT_EQ(tb.track().direction, ta.track().direction);
    ASSERT_EQ(tb.frames().size(), ta.frames().size());
    for (std::size_t k = 0; k < ta.frames().size(); ++k) {
      const Frame& fa = ta.frames()[k];
      const Frame& fb = tb.frames()[k];
      EXPECT_EQ(fb.frame_index, fa.frame_index);
      EXPECT_EQ(fb.lane_id, fa.lane_id);
      for (auto [va, vb] : {std::pair{fa.t, fb.t}, {fa.x, fb.x}, {fa.y, fb.y}, {fa.vx, fb.vx}, {fa.vy, fb.vy},
                            {fa.ax, fb.ax}, {fa.ay, fb.ay}, {fa.lat_velocity, fb.lat_velocity},
                            {fa.heading, fb.heading}, {fa.yaw_rate, fb.yaw_rate},
                            {fa.lateral_offset, fb.lateral_offset}})
        ASSERT_NEAR(va, vb, 1e-9);
      EXPECT_EQ(fb.dhw.has_value(), fa.dhw.has_value());
      EXPECT_EQ(fb.ttc.has_value(), fa.ttc.has_value());
      if (fa.dhw) EXPECT_NEAR(*fb.dhw, *fa.dhw, 1e-9);
      for (std::size_t s = 0; s < kSlotCount; ++s) {
        EXPECT_EQ(fb.neighbors.slots[s].track_id, fa.neighbors.slots[s].track_id);
        if (fa.neighbors.slots[s].occupied()) {
          EXPECT_NEAR(fb.neighbors.slots[s].gap, fa.neighbors.slots[s].gap, 1e-9);
          EXPECT_NEAR(fb.neighbors.slots[s].delta_v, fa.neighbors.slots[s].delta_v, 1e-9);
        }
      }
    }
  }
}

TEST(GeometryJson, RoundTrip) {
  LaneGeometry g = three_lanes();
  g.ramps.push_back(Ramp{RampKind::Exit, DrivingDirection::Dir1, 420.5});
  const auto back = geometry_from_json(geometry_to_json(g));
  EXPECT_EQ(geometry_to_json(back), geometry_to_json(g));
  ASSERT_EQ(back.ramps.size(), 1u);
  EXPECT_EQ(back.ramps[0].kind, RampKind::Exit);
}
