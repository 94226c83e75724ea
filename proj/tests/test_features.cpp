#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "lcp/features.hpp"
#include "lcp/pipeline.hpp"
#include "lcp/synthgen.hpp"
#include "support.hpp"

using namespace lcp;
using namespace lcp::test;

namespace {

Frame frame_with_gaps(std::array<std::optional<double>, kSlotCount> gaps) {
  Frame f;
  for (std::size_t s = 0; s < kSlotCount; ++s)
    if (gaps[s]) {
      f.neighbors.slots[s].track_id = static_cast<int>(s) + 100;
      f.neighbors.slots[s].gap = *gaps[s];
    }
  return f;
}

struct Fixture {
  std::vector<Recording> recs;
  std::vector<std::vector<std::vector<LaneChangeEvent>>> events;
  std::vector<LabeledSample> samples;
  NeighborStats stats;
};

Fixture make_fixture(int vehicles = 16, double duration = 40.0, std::vector<int> locations = {0, 1}) {
  BenchmarkOptions opt;
  opt.vehicles = vehicles;
  opt.duration = duration;
  Fixture fx;
  for (auto& s : benchmark_dataset(locations, 31, opt)) fx.recs.push_back(std::move(s.recording));
  const DetectionParams det;
  for (const auto& r : fx.recs) {
    fx.events.emplace_back();
    for (const auto& t : r.tracks) fx.events.back().push_back(detect_events(t, r.geometry, det, r.f_s));
  }
  for (std::size_t i = 0; i < fx.recs.size(); ++i) {
    auto s = build_samples(fx.recs[i], fx.events[i], SamplingConfig{});
    fx.samples.insert(fx.samples.end(), s.begin(), s.end());
  }
  fx.stats.gap = compute_gap_stats(fx.recs, fx.events, locations);
  fx.stats.time_gap = compute_time_gap_stats(fx.recs, fx.samples);
  return fx;
}

const Fixture& fixture() {
  static const Fixture fx = make_fixture();
  return fx;
}

FeatureManifest manifest(DatasetProfile p) { return default_manifest(p, kDefaultDataDir); }

}  // namespace

TEST(SlotStats, PopulationMoments) {
  const std::vector<double> g{50, 60, 70};
  const auto s = slot_stats(g, "ego_lead");
  EXPECT_DOUBLE_EQ(s.mean, 60.0);
  EXPECT_NEAR(s.std, std::sqrt(200.0 / 3.0), 1e-12);
  EXPECT_NEAR(s.std, 8.165, 5e-4);
  EXPECT_EQ(s.count, 3u);
  const std::vector<double> one{42};
  EXPECT_LCP_ERROR(slot_stats(one, "x"), ErrorCode::InsufficientData);
}

TEST(RollingStats, Examples) {
  const std::vector<double> speed{20, 20, 20};
  const auto a = rolling_stats(speed);
  EXPECT_EQ(a.mean, 20);
  EXPECT_EQ(a.std, 0);
  EXPECT_EQ(a.min, 20);
  EXPECT_EQ(a.max, 20);
  const std::vector<double> acc{1, -1};
  const auto b = rolling_stats(acc);
  EXPECT_EQ(b.mean, 0);
  EXPECT_EQ(b.std, 1);
  EXPECT_EQ(b.min, -1);
  EXPECT_EQ(b.max, 1);
  EXPECT_LCP_ERROR(rolling_stats(std::span<const double>{}), ErrorCode::EmptySeries);
}

TEST(LanePositionFeatures, CenteredVehicle) {
  const auto g = three_lanes(3.7);
  const auto t = validated(make_track(1, 0, 5, [](std::int64_t) { return 1.85; }, [](std::int64_t) { return 0.0; }, g), g);
  const auto p = lane_position_features(t, g, 4, 25);
  EXPECT_NEAR(p.offset, 0.0, 1e-12);
  EXPECT_NEAR(p.dist_left, 1.85, 1e-12);
  EXPECT_NEAR(p.dist_right, -1.85, 1e-12);
}

TEST(LanePositionFeatures, WindowDifferences) {
  const auto g = three_lanes(3.7);
  const auto t = validated(make_track(1, 0, 3, [](std::int64_t f) { return 1.85 + 0.1 * static_cast<double>(f); },
                                      [](std::int64_t) { return 2.5; }, g),
                           g);
  const auto p = lane_position_features(t, g, 2, 3);
  EXPECT_NEAR(p.d_offset, 0.1, 1e-12);
  EXPECT_NEAR(p.cum_disp, 0.2, 1e-12);
  EXPECT_NEAR(p.offset_mean, 0.1, 1e-12);
}

TEST(LanePositionFeatures, UnknownLane) {
  const auto g = three_lanes(3.7);
  Track tr = make_track(1, 0, 3, [](std::int64_t) { return 1.85; }, [](std::int64_t) { return 0.0; }, g);
  tr.frames[2].lane_id.reset();
  const auto t = validated(tr, g);
  EXPECT_LCP_ERROR(lane_position_features(t, g, 2, 3), ErrorCode::UnknownLane);
}

TEST(NeighborInteraction, EmptyAndPartial) {
  const auto empty = neighbor_interaction_features(Frame{});
  EXPECT_EQ(empty.occupancy, 0.0);
  for (double g : empty.gap) EXPECT_EQ(g, kGapCap);

  Frame f = frame_with_gaps({40.0, std::nullopt, 12.0, std::nullopt, 70.0, std::nullopt});
  f.neighbors[Slot::EgoLead].delta_v = -5.0;
  const auto n = neighbor_interaction_features(f);
  EXPECT_DOUBLE_EQ(n.approach[index(Slot::EgoLead)], 5.0);
  EXPECT_DOUBLE_EQ(n.occupancy, 0.5);
  EXPECT_DOUBLE_EQ(n.gap[index(Slot::EgoLead)], 40.0);
  EXPECT_DOUBLE_EQ(n.gap[index(Slot::EgoRear)], kGapCap);
  // a faster follower also closes in
  Frame r = frame_with_gaps({std::nullopt, 20.0, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
  r.neighbors[Slot::EgoRear].delta_v = 3.0;
  EXPECT_DOUBLE_EQ(neighbor_interaction_features(r).approach[index(Slot::EgoRear)], 3.0);
}

TEST(NormalizedDistance, Examples) {
  const SlotStats st{54.8, 47.9, 100};
  const auto a = normalized_distance(54.8 + 47.9, st);
  EXPECT_NEAR(a.z, 1.0, 1e-12);
  EXPECT_NEAR(a.s, 102.7 / 54.8, 1e-12);
  EXPECT_NEAR(a.s, 1.874, 5e-4);
  const auto b = normalized_distance(54.8, st);
  EXPECT_EQ(b.z, 0.0);
  EXPECT_EQ(b.s, 1.0);
  EXPECT_LCP_ERROR(normalized_distance(10.0, SlotStats{54.8, 0.0, 5}), ErrorCode::DegenerateStats);
}

TEST(SafeGap, StrictBoundary) {
  const SlotStats st{54.8, 47.9, 100};
  EXPECT_EQ(safe_gap_indicator(150.7, st), 1);
  EXPECT_EQ(safe_gap_indicator(150.6, st), 0);
  EXPECT_EQ(safe_gap_indicator(std::nullopt, st), 1);
}

TEST(SafeGap, CountOverSlots) {
  std::array<SlotStats, kSlotCount> st;
  st.fill(SlotStats{50.0, 10.0, 10});
  // safe pattern (1,0,1,0,0,1): large gap, small gap, empty, small, small, large
  const Frame f = frame_with_gaps({100.0, 20.0, std::nullopt, 30.0, 69.9, 71.0});
  EXPECT_EQ(safe_gap_count(f, st), 3);
}

TEST(SafeGap, MonotoneInDistance) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const SlotStats st{rng.uniform(10, 100), rng.uniform(1, 50), 10};
    const double a = rng.uniform(0, 300), b = rng.uniform(0, 300);
    EXPECT_LE(safe_gap_indicator(std::min(a, b), st), safe_gap_indicator(std::max(a, b), st));
  }
}

TEST(LaneAdvantage, Examples) {
  const auto a = lane_advantage(80, 50, 60, 70);
  EXPECT_EQ(a.lead, 30);
  EXPECT_EQ(a.rear, -10);
  EXPECT_EQ(a.availability, -10);
  const auto b = lane_advantage(40, 40, 40, 40);
  EXPECT_EQ(b.lead, 0);
  EXPECT_EQ(b.rear, 0);
  EXPECT_EQ(b.availability, 0);
  const Frame f = frame_with_gaps({50.0, 50.0, std::nullopt, std::nullopt, 10.0, 10.0});
  const auto c = lane_advantage(f, +1);
  EXPECT_EQ(c.lead, 250);
  EXPECT_EQ(c.rear, 250);
  EXPECT_EQ(c.availability, 250);
}

TEST(LaneAdvantage, MinAndSwapProperties) {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double sl = rng.uniform(0, 300), el = rng.uniform(0, 300), sr = rng.uniform(0, 300), er = rng.uniform(0, 300);
    const auto a = lane_advantage(sl, el, sr, er);
    EXPECT_EQ(a.availability, std::min(a.lead, a.rear));
    const auto s = lane_advantage(el, sl, er, sr);
    EXPECT_EQ(s.lead, -a.lead);
    EXPECT_EQ(s.rear, -a.rear);
  }
}

TEST(TimeToGap, Examples) {
  EXPECT_DOUBLE_EQ(time_to_gap(50, 25), 2.0);
  EXPECT_DOUBLE_EQ(time_to_gap(50, 0), 50 / 0.5);
  EXPECT_DOUBLE_EQ(time_to_gap(50, 0.1, 0.5), 100.0);
}

TEST(ClosingGapTime, Examples) {
  EXPECT_DOUBLE_EQ(closing_gap_time(30, -6), 30 / 6.000001);
  EXPECT_NEAR(closing_gap_time(30, -6), 5.0, 1e-5);
  // uncapped value is 3e7 s, above the cap
  EXPECT_NEAR(30 / (0.0 + kCgtEpsilon), 3e7, 1e-3);
  EXPECT_EQ(closing_gap_time(30, 0), kCgtCap);
  EXPECT_EQ(closing_gap_time(0, 4), 0.0);
}

TEST(ClosingGapTime, MonotoneProperties) {
  Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    const double d = rng.uniform(0, 300), dv1 = rng.uniform(-20, 20), dv2 = rng.uniform(-20, 20);
    const double lo = std::abs(dv1) <= std::abs(dv2) ? dv1 : dv2;
    const double hi = std::abs(dv1) <= std::abs(dv2) ? dv2 : dv1;
    EXPECT_GE(closing_gap_time(d, lo), closing_gap_time(d, hi));
    const double d2 = d + rng.uniform(0, 50);
    EXPECT_LE(closing_gap_time(d, dv1), closing_gap_time(d2, dv1));
  }
}

TEST(SafetyMinima, Examples) {
  auto frames = [](std::vector<std::optional<double>> ttc, std::vector<std::optional<double>> thw) {
    std::vector<Frame> out(std::max(ttc.size(), thw.size()));
    for (std::size_t i = 0; i < ttc.size(); ++i) out[i].ttc = ttc[i];
    for (std::size_t i = 0; i < thw.size(); ++i) out[i].thw = thw[i];
    return out;
  };
  const auto a = safety_minima(frames({8.0, 5.0, 12.0}, {}));
  EXPECT_EQ(a.min_ttc, 5.0);
  EXPECT_TRUE(a.has_ttc);
  const auto b = safety_minima(frames({std::nullopt, std::nullopt}, {}));
  EXPECT_EQ(b.min_ttc, kSafetyCap);
  EXPECT_FALSE(b.has_ttc);
  const auto c = safety_minima(frames({}, {1.2, std::nullopt, 0.9}));
  EXPECT_EQ(c.min_thw, 0.9);
  EXPECT_LCP_ERROR(safety_minima(std::span<const Frame>{}), ErrorCode::EmptySeries);
}

TEST(Behavior, Examples) {
  EXPECT_DOUBLE_EQ(lane_change_frequency(2, 4.0), 0.5);
  EXPECT_NEAR(speed_ratio(30, 33.33), 0.9, 1e-4);
  EXPECT_EQ(speed_ratio(30, std::nullopt), 1.0);
}

TEST(Ramp, Examples) {
  const auto a = ramp_reachability(250, 25);
  EXPECT_DOUBLE_EQ(a.eta, 10.0);
  EXPECT_EQ(a.reach_5s, 0.0);
  EXPECT_EQ(a.reach_15s, 1.0);
  EXPECT_EQ(a.reach_30s, 1.0);
  const auto b = ramp_reachability(0, 25);
  EXPECT_EQ(b.eta, 0.0);
  EXPECT_EQ(b.reach_5s + b.reach_15s + b.reach_30s, 3.0);

  LaneGeometry g = three_lanes();
  Frame f;
  f.x = 100;
  f.vx = 25;
  EXPECT_LCP_ERROR(ramp_features(g, DrivingDirection::Dir1, f), ErrorCode::NoRampGeometry);
  g.ramps.push_back(Ramp{RampKind::Exit, DrivingDirection::Dir1, 350});
  g.ramps.push_back(Ramp{RampKind::Entry, DrivingDirection::Dir1, 50});  // behind: ignored
  const auto r = ramp_features(g, DrivingDirection::Dir1, f);
  EXPECT_DOUBLE_EQ(r.dist_exit, 250);
  EXPECT_DOUBLE_EQ(r.dist_entry, kRampDistanceCap);
  EXPECT_DOUBLE_EQ(r.eta, 10.0);
}

TEST(Manifest, ProfileSizes) {
  const auto h = manifest(DatasetProfile::HighD);
  const auto e = manifest(DatasetProfile::ExiD);
  EXPECT_EQ(h.size(), 99u);
  EXPECT_EQ(e.size(), 104u);
  EXPECT_EQ(expected_manifest_size(DatasetProfile::HighD), 99u);
  EXPECT_EQ(expected_manifest_size(DatasetProfile::ExiD), 104u);
  EXPECT_NE(h.hash(), e.hash());
  EXPECT_LCP_ERROR(check_manifest_length(h, 98), ErrorCode::ManifestMismatch);
  const auto back = manifest_from_json(manifest_to_json(h));
  EXPECT_EQ(back.hash(), h.hash());
  // every manifest name has an extractor
  for (const auto& n : e.names())
    EXPECT_NE(std::find(feature_catalogue().begin(), feature_catalogue().end(), n), feature_catalogue().end()) << n;
}

TEST(Manifest, DuplicateNameRejected) {
  auto m = manifest(DatasetProfile::HighD);
  m.features[1].name = m.features[0].name;
  EXPECT_ANY_THROW(m.validate());
}

TEST(Extractor, VectorLengthsAndDeterminism) {
  const auto& fx = fixture();
  Recording rec = fx.recs[0];
  rec.geometry.ramps.push_back(Ramp{RampKind::Exit, DrivingDirection::Dir1, 1500.0});
  const FeatureExtractor hi(manifest(DatasetProfile::HighD), fx.stats, SamplingConfig{}, DetectionParams{});
  const FeatureExtractor ex(manifest(DatasetProfile::ExiD), fx.stats, SamplingConfig{}, DetectionParams{});
  const auto& t = rec.tracks[0];
  const auto a = t.first_frame() + 60;
  const auto v1 = hi.compute(rec, t, a);
  const auto v2 = hi.compute(rec, t, a);
  EXPECT_EQ(v1.size(), 99u);
  EXPECT_EQ(ex.compute(rec, t, a).size(), 104u);
  ASSERT_EQ(v1.size(), v2.size());
  EXPECT_EQ(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)), 0);
  for (double v : v1) EXPECT_TRUE(std::isfinite(v));
  // exid features need ramps
  EXPECT_LCP_ERROR(ex.compute(fx.recs[0], t, a), ErrorCode::NoRampGeometry);
}

TEST(Extractor, NoLookAhead) {
  const auto& fx = fixture();
  const FeatureExtractor hi(manifest(DatasetProfile::HighD), fx.stats, SamplingConfig{}, DetectionParams{});
  Rng rng(17);
  int checked = 0;
  for (const auto& s : fx.samples) {
    if (rng.uniform() > 0.02) continue;
    const auto& rec = *std::find_if(fx.recs.begin(), fx.recs.end(),
                                    [&](const Recording& r) { return r.recording_id == s.recording_id; });
    Recording mod = rec;
    auto& track = *std::find_if(mod.tracks.begin(), mod.tracks.end(),
                                [&](const ValidatedTrack& t) { return t.id() == s.track_id; });
    for (auto& f : TrackEditor::frames(track)) {
      if (f.frame_index <= s.anchor_frame) continue;
      f.y += rng.uniform(-3, 3);
      f.lat_velocity = rng.uniform(-2, 2);
      f.vx += rng.uniform(-5, 5);
      f.ax = rng.uniform(-3, 3);
      f.ttc = rng.uniform(0.5, 3);
      f.neighbors[Slot::EgoLead].track_id = 999;
      f.neighbors[Slot::EgoLead].gap = 1.0;
    }
    const auto a = hi.compute(rec, *rec.find(s.track_id), s.anchor_frame);
    const auto b = hi.compute(mod, track, s.anchor_frame);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << "anchor " << s.anchor_frame;
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(Extractor, TimeGapZScoresStandardizedOnTraining) {
  const auto fx = make_fixture(30, 60, {0, 1, 2});
  ASSERT_GE(fx.samples.size(), 10000u);
  const auto m = manifest(DatasetProfile::HighD);
  const FeatureExtractor ex(m, fx.stats, SamplingConfig{}, DetectionParams{});
  const auto mat = build_feature_matrix(fx.recs, fx.samples, ex);
  int columns = 0;
  for (const char* name : {"ttg_z_ego_lead", "ttg_z_left_lead", "ttg_z_right_lead"}) {
    const auto c = m.index_of(name);
    if (!c) continue;
    ++columns;
    double sum = 0, ss = 0;
    for (std::size_t r = 0; r < mat.rows; ++r) sum += mat.at(r, *c);
    const double mean = sum / static_cast<double>(mat.rows);
    for (std::size_t r = 0; r < mat.rows; ++r) ss += (mat.at(r, *c) - mean) * (mat.at(r, *c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(mat.rows));
    EXPECT_GE(mean, -0.05) << name;
    EXPECT_LE(mean, 0.05) << name;
    EXPECT_GE(sd, 0.95) << name;
    EXPECT_LE(sd, 1.05) << name;
  }
  EXPECT_GT(columns, 0);
}

TEST(Extractor, TimeGapZeroAtTrainingMean) {
  const auto& fx = fixture();
  const auto& rec = fx.recs[0];
  const auto& t = rec.tracks[0];
  const auto a = t.first_frame() + 40;
  NeighborStats st = fx.stats;
  const Frame& f = t.at(a);
  st.time_gap[index(Slot::EgoLead)].mean = time_to_gap(imputed_gap(f.neighbors[Slot::EgoLead]), f.speed());
  const auto m = manifest(DatasetProfile::HighD);
  const FeatureExtractor ex(m, st, SamplingConfig{}, DetectionParams{});
  const auto c = m.index_of("ttg_z_ego_lead");
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(ex.compute(rec, t, a)[*c], 0.0);
}

TEST(FeatureFiles, BinaryAndCsvRoundTrip) {
  const auto& fx = fixture();
  const FeatureExtractor ex(manifest(DatasetProfile::HighD), fx.stats, SamplingConfig{}, DetectionParams{});
  std::vector<LabeledSample> few(fx.samples.begin(), fx.samples.begin() + 50);
  const auto m = build_feature_matrix(fx.recs, few, ex);
  const auto dir = temp_dir("features_io");
  for (const char* name : {"f.bin", "f.csv"}) {
    write_features(m, dir / name);
    const auto b = read_features(dir / name);
    EXPECT_EQ(b.rows, m.rows);
    EXPECT_EQ(b.cols, m.cols);
    EXPECT_EQ(b.manifest_hash, m.manifest_hash);
    EXPECT_EQ(b.values, m.values);
    EXPECT_EQ(b.labels, m.labels);
    EXPECT_EQ(b.names, m.names);
    ASSERT_EQ(b.refs.size(), m.refs.size());
    for (std::size_t i = 0; i < m.refs.size(); ++i) EXPECT_EQ(b.refs[i].anchor_frame, m.refs[i].anchor_frame);
  }
}
