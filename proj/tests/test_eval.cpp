#include <gtest/gtest.h>

#include <set>

#include "lcp/eval.hpp"
#include "lcp/pipeline.hpp"
#include "lcp/synthgen.hpp"
#include "support.hpp"

using namespace lcp;
using namespace lcp::test;

namespace {

std::vector<Recording> recordings(const std::vector<int>& locations, std::uint64_t seed) {
  BenchmarkOptions opt;
  opt.vehicles = 12;
  opt.duration = 40.0;
  std::vector<Recording> out;
  for (auto& s : benchmark_dataset(locations, seed, opt)) out.push_back(std::move(s.recording));
  return out;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.manifest = default_manifest(DatasetProfile::HighD, kDefaultDataDir);
  cfg.train.num_rounds = 10;
  cfg.train.min_data_in_leaf = 5;
  cfg.split = SplitSpec({0, 1, 2, 3}, {4, 5}, 3, 7);
  return cfg;
}

}  // namespace

TEST(Split, MembershipExact) {
  const std::vector<int> loc{0, 4, 1, 5, 2, 3, 6, 4};
  const auto s = split_by_location(loc, default_split(DatasetProfile::HighD));
  EXPECT_EQ(s.train, (std::vector<std::size_t>{0, 2, 4, 5}));
  EXPECT_EQ(s.test, (std::vector<std::size_t>{1, 3, 7}));
  EXPECT_EQ(s.dropped, 1u);
  const auto e = default_split(DatasetProfile::ExiD);
  EXPECT_EQ(e.test_locations, (std::vector<int>{4, 5, 6}));
  const auto se = split_by_location(loc, e);
  EXPECT_EQ(se.test, (std::vector<std::size_t>{1, 3, 6, 7}));
  EXPECT_EQ(se.dropped, 0u);
}

TEST(Split, OverlapAndEmpty) {
  EXPECT_LCP_ERROR(SplitSpec({0}, {0}), ErrorCode::OverlappingSplit);
  const std::vector<int> only_train{0, 1};
  EXPECT_LCP_ERROR(split_by_location(only_train, SplitSpec({0, 1}, {4})), ErrorCode::EmptyPartition);
}

TEST(KFold, GroupsPerFold) {
  std::vector<std::int64_t> groups;
  for (int g = 0; g < 10; ++g)
    for (int k = 0; k <= g % 3; ++k) groups.push_back(g);
  const auto a = kfold_cv(groups, 5, 3);
  std::map<int, std::set<std::int64_t>> per_fold;
  std::map<std::int64_t, int> fold_of;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    per_fold[a[i]].insert(groups[i]);
    auto [it, fresh] = fold_of.emplace(groups[i], a[i]);
    EXPECT_EQ(it->second, a[i]) << "group split across folds";
  }
  ASSERT_EQ(per_fold.size(), 5u);
  for (auto& [f, g] : per_fold) EXPECT_EQ(g.size(), 2u);
  EXPECT_EQ(kfold_cv(groups, 5, 3), a);
  const std::vector<std::int64_t> three{1, 2, 3};
  EXPECT_LCP_ERROR(kfold_cv(three, 5, 1), ErrorCode::TooFewGroups);
}

TEST(KFold, NoTrackInTwoFolds) {
  Rng rng(5);
  std::vector<std::int64_t> groups;
  for (int i = 0; i < 3000; ++i) groups.push_back(track_group(static_cast<int>(rng.below(4)), static_cast<int>(rng.below(80))));
  const auto f = kfold_cv(groups, 5, 11);
  std::map<std::int64_t, int> seen;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto [it, fresh] = seen.emplace(groups[i], f[i]);
    EXPECT_EQ(it->second, f[i]);
  }
  EXPECT_NE(track_group(1, 2), track_group(2, 1));
}

TEST(Metrics, PerClassF1FromCounts) {
  EXPECT_NEAR(f1_from_counts(90, 10, 10), 0.9, 1e-15);
  EXPECT_NEAR(f1_from_counts(8, 2, 2), 0.8, 1e-15);
  EXPECT_NEAR(f1_from_counts(7, 3, 3), 0.7, 1e-15);
  EXPECT_NEAR((f1_from_counts(90, 10, 10) + f1_from_counts(8, 2, 2) + f1_from_counts(7, 3, 3)) / 3, 0.8, 1e-15);
  EXPECT_EQ(f1_from_counts(0, 0, 0), 0.0);
  EXPECT_EQ(f1_from_counts(0, 4, 0), 0.0);
}

TEST(Metrics, ConfusionOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> pred, truth;
    for (int i = 0; i < 300; ++i) {
      truth.push_back(static_cast<std::uint8_t>(rng.below(3)));
      pred.push_back(rng.below(4) == 0 ? static_cast<std::uint8_t>(rng.below(3)) : truth.back());
    }
    const auto m = compute_metrics(pred, truth);
    std::uint64_t total = 0, correct = 0;
    double f1sum = 0;
    for (int c = 0; c < 3; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        tp += pred[i] == c && truth[i] == c;
        fp += pred[i] == c && truth[i] != c;
        fn += pred[i] != c && truth[i] == c;
      }
      const double p = tp / (tp + fp), r = tp / (tp + fn);
      EXPECT_NEAR(m.per_class[c].f1, 2 * p * r / (p + r), 1e-12);
      f1sum += m.per_class[c].f1;
      for (int k = 0; k < 3; ++k) total += m.confusion[c][k];
      correct += m.confusion[c][c];
    }
    EXPECT_EQ(total, pred.size());
    EXPECT_NEAR(m.accuracy, static_cast<double>(correct) / 300.0, 1e-15);
    EXPECT_NEAR(m.macro_f1, f1sum / 3, 1e-12);
  }
}

TEST(Metrics, PerfectAndZeroConvention) {
  const std::vector<std::uint8_t> y{0, 1, 2, 0};
  const auto p = compute_metrics(y, y);
  EXPECT_EQ(p.accuracy, 1.0);
  EXPECT_EQ(p.macro_f1, 1.0);
  const std::vector<std::uint8_t> nlc(4, 0);
  const auto z = compute_metrics(nlc, y);
  EXPECT_EQ(z.per_class[1].f1, 0.0);
  EXPECT_EQ(z.per_class[2].f1, 0.0);
  const std::vector<std::uint8_t> shorter{0};
  EXPECT_LCP_ERROR(compute_metrics(shorter, y), ErrorCode::LengthMismatch);
}

TEST(Smoothing, ConstantIsIdentityAndEdgesTruncate) {
  const std::vector<ProbVector> c(7, ProbVector{0.2, 0.5, 0.3});
  for (const auto& v : smooth_probs(c, 5))
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(v[k], c[0][k], 1e-15);
  std::vector<ProbVector> ramp;
  for (int i = 0; i < 6; ++i) ramp.push_back({static_cast<double>(i), 0, 0});
  const auto s = smooth_probs(ramp, 5);
  EXPECT_DOUBLE_EQ(s[0][0], (0 + 1 + 2) / 3.0);
  EXPECT_DOUBLE_EQ(s[1][0], (0 + 1 + 2 + 3) / 4.0);
  EXPECT_DOUBLE_EQ(s[2][0], 2.0);
  EXPECT_DOUBLE_EQ(s[5][0], (3 + 4 + 5) / 3.0);
  // frame-aware version matches at stride 1 and is the identity at stride 5
  std::vector<std::int64_t> f1{10, 11, 12, 13, 14, 15}, f5{0, 5, 10, 15, 20, 25};
  const auto b1 = smooth_probs_by_frame(ramp, f1, 5);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(b1[i][0], s[i][0]);
  const auto b5 = smooth_probs_by_frame(ramp, f5, 5);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(b5[i][0], ramp[i][0]);
}

TEST(Suppression, Examples) {
  const std::vector<ProbVector> llc(3, ProbVector{0.1, 0.8, 0.1});
  std::vector<SideContext> blocked(3, SideContext{0.0, 1.0, -5.0, 0.0});
  for (auto m : smooth_and_validate(llc, blocked, ThresholdSet{}, 5)) EXPECT_EQ(m, Maneuver::NLC);
  std::vector<SideContext> safe(3, SideContext{2.0, 1.0, -5.0, 0.0});
  for (auto m : smooth_and_validate(llc, safe, ThresholdSet{}, 5)) EXPECT_EQ(m, Maneuver::LLC);
  // right side blocked has no effect on a left change
  std::vector<SideContext> right_blocked(3, SideContext{1.0, 0.0, 0.0, -5.0});
  for (auto m : smooth_and_validate(llc, right_blocked, ThresholdSet{}, 5)) EXPECT_EQ(m, Maneuver::LLC);
  const std::vector<SideContext> shorter(2);
  EXPECT_LCP_ERROR(smooth_and_validate(llc, shorter, ThresholdSet{}, 5), ErrorCode::MisalignedSequences);
}

TEST(Suppression, NeverFlipsDirection) {
  Rng rng(7);
  std::vector<ProbVector> p;
  std::vector<SideContext> ctx;
  for (int i = 0; i < 5000; ++i) {
    ProbVector v{rng.uniform(), rng.uniform(), rng.uniform()};
    const double s = v[0] + v[1] + v[2];
    for (auto& x : v) x /= s;
    p.push_back(v);
    ctx.push_back({static_cast<double>(rng.below(3)), static_cast<double>(rng.below(3)), rng.uniform(-50, 50),
                   rng.uniform(-50, 50)});
  }
  const auto plain = decide(smooth_probs(p, 5), ThresholdSet{});
  const auto out = smooth_and_validate(p, ctx, ThresholdSet{}, 5);
  int demoted = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != plain[i]) {
      EXPECT_EQ(out[i], Maneuver::NLC);
      EXPECT_NE(plain[i], Maneuver::NLC);
      ++demoted;
    }
  }
  EXPECT_GT(demoted, 0);
}

TEST(Experiment, NoLeakageFromTestLocations) {
  const auto cfg = small_config();
  auto base = recordings({0, 1, 2, 3, 4, 5}, 41);
  auto other = base;
  // replace the test-location recordings with different traffic
  auto fresh = recordings({4, 5}, 999);
  for (auto& r : other)
    for (auto& f : fresh)
      if (r.location_id == f.location_id) {
        const int id = r.recording_id;
        r = f;
        r.recording_id = id;
      }
  const auto a = run_cell(base, 1.0, 1.0, cfg);
  const auto b = run_cell(other, 1.0, 1.0, cfg);
  EXPECT_EQ(a.train.values, b.train.values);
  EXPECT_EQ(a.train.labels, b.train.labels);
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    EXPECT_EQ(a.stats.gap[s].mean, b.stats.gap[s].mean);
    EXPECT_EQ(a.stats.gap[s].std, b.stats.gap[s].std);
    EXPECT_EQ(a.stats.time_gap[s].mean, b.stats.time_gap[s].mean);
  }
  EXPECT_EQ(a.result.tau.tau, b.result.tau.tau);
  EXPECT_EQ(gbdt::model_to_json(a.model), gbdt::model_to_json(b.model));
  EXPECT_NE(a.test.values, b.test.values);
  for (const auto& r : a.train.refs) EXPECT_TRUE(cfg.split.is_train(r.location_id));
  for (const auto& r : a.test.refs) EXPECT_TRUE(cfg.split.is_test(r.location_id));
}

TEST(Experiment, SingleCellSweep) {
  const auto cfg = small_config();
  const auto recs = recordings({0, 1, 2, 3, 4, 5}, 42);
  const std::vector<double> w{1.0}, t{1.0};
  const auto r = run_sweep(recs, w, t, cfg);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.best_window.at(1.0), 1.0);
  const auto csv = sweep_to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_GT(r.cells[0].raw.macro_f1, 0.5);
  std::uint64_t total = 0;
  for (const auto& row : r.cells[0].raw.confusion)
    for (auto v : row) total += v;
  EXPECT_EQ(total, r.cells[0].test_rows);
}

TEST(Experiment, RandomSearchBudget) {
  auto cfg = small_config();
  const auto recs = recordings({0, 1, 2, 3, 4, 5}, 43);
  const auto data = prepare_cell(recs, 1.0, 1.0, cfg);
  SearchSpace space;
  space.learning_rate = {0.1};
  space.max_leaves = {7, 15};
  space.min_data_in_leaf = {5};
  space.lambda = {1.0};
  space.feature_fraction = {1.0};
  const auto s = random_search(data.train, cfg, space, 6, 3);
  EXPECT_LE(s.trials.size(), 2u);
  EXPECT_GE(s.trials.size(), 1u);
  for (const auto& [p, score] : s.trials) EXPECT_LE(score, s.best_score);
  EXPECT_LCP_ERROR(random_search(data.train, cfg, space, 0, 3), ErrorCode::InvalidConfig);
}
