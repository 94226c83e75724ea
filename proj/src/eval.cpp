#include "lcp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lcp/csv.hpp"
#include "lcp/error.hpp"
#include "lcp/random.hpp"

namespace lcp {

using json = nlohmann::json;

SplitSpec::SplitSpec(std::vector<int> train, std::vector<int> test, int folds, std::uint64_t seed)
    : train_locations(std::move(train)), test_locations(std::move(test)), cv_folds(folds), fold_seed(seed) {
  validate();
}

void SplitSpec::validate() const {
  for (int l : train_locations)
    if (is_test(l))
      throw Error(ErrorCode::OverlappingSplit, "location " + std::to_string(l) + " is in both train and test",
                  {std::to_string(l)});
  if (cv_folds != 0 && cv_folds < 2) throw Error(ErrorCode::InvalidConfig, "cv_folds must be 0 or at least 2");
}

bool SplitSpec::is_train(int location) const {
  return std::find(train_locations.begin(), train_locations.end(), location) != train_locations.end();
}

bool SplitSpec::is_test(int location) const {
  return std::find(test_locations.begin(), test_locations.end(), location) != test_locations.end();
}

SplitSpec default_split(DatasetProfile profile) {
  if (profile == DatasetProfile::ExiD) return SplitSpec({0, 1, 2, 3}, {4, 5, 6});
  return SplitSpec({0, 1, 2, 3}, {4, 5});
}

SplitIndices split_by_location(std::span<const int> locations, const SplitSpec& spec) {
  spec.validate();
  SplitIndices out;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (spec.is_train(locations[i])) out.train.push_back(i);
    else if (spec.is_test(locations[i])) out.test.push_back(i);
    else ++out.dropped;
  }
  if (out.dropped > 0)
    std::cerr << "warning: " << out.dropped << " rows belong to neither split and were dropped\n";
  if (out.train.empty()) throw Error(ErrorCode::EmptyPartition, "no rows in the training locations");
  if (out.test.empty()) throw Error(ErrorCode::EmptyPartition, "no rows in the test locations");
  return out;
}

SplitIndices split_by_location(const std::vector<LabeledSample>& samples, const SplitSpec& spec) {
  std::vector<int> loc;
  loc.reserve(samples.size());
  for (const auto& s : samples) loc.push_back(s.location_id);
  return split_by_location(loc, spec);
}

SplitIndices split_by_location(const FeatureMatrix& m, const SplitSpec& spec) {
  if (m.refs.size() != m.rows) throw Error(ErrorCode::LengthMismatch, "feature matrix has no sample refs");
  std::vector<int> loc;
  loc.reserve(m.rows);
  for (const auto& r : m.refs) loc.push_back(r.location_id);
  return split_by_location(loc, spec);
}

std::int64_t track_group(int recording_id, int track_id) {
  return (static_cast<std::int64_t>(recording_id) << 32) | static_cast<std::uint32_t>(track_id);
}

std::vector<std::int64_t> track_groups(const FeatureMatrix& m) {
  std::vector<std::int64_t> g(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    // Synthetic rows have no track; each becomes its own group.
    if (i >= m.refs.size() || m.refs[i].track_id < 0)
      g[i] = std::numeric_limits<std::int64_t>::min() + static_cast<std::int64_t>(i);
    else
      g[i] = track_group(m.refs[i].recording_id, m.refs[i].track_id);
  }
  return g;
}

std::vector<int> kfold_cv(std::span<const std::int64_t> groups, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidConfig, "need at least two folds");
  std::vector<std::int64_t> unique(groups.begin(), groups.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() < static_cast<std::size_t>(folds))
    throw Error(ErrorCode::TooFewGroups, std::to_string(unique.size()) + " groups for " + std::to_string(folds) +
                                             " folds");
  Rng rng(seed);
  for (std::size_t i = unique.size(); i > 1; --i) std::swap(unique[i - 1], unique[rng.below(i)]);
  std::unordered_map<std::int64_t, int> fold_of;
  for (std::size_t i = 0; i < unique.size(); ++i) fold_of[unique[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  std::vector<int> out(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) out[i] = fold_of[groups[i]];
  return out;
}

std::vector<ProbVector> smooth_probs(std::span<const ProbVector> probs, int window) {
  if (window < 1) throw Error(ErrorCode::InvalidConfig, "smoothing window must be positive");
  const auto n = static_cast<std::ptrdiff_t>(probs.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<ProbVector> out(probs.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    ProbVector s{};
    for (auto j = lo; j <= hi; ++j)
      for (int c = 0; c < kNumClasses; ++c) s[c] += probs[static_cast<std::size_t>(j)][c];
    const auto cnt = static_cast<double>(hi - lo + 1);
    for (int c = 0; c < kNumClasses; ++c) s[c] /= cnt;
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

std::vector<ProbVector> smooth_probs_by_frame(std::span<const ProbVector> probs, std::span<const std::int64_t> frames,
                                              int window) {
  if (probs.size() != frames.size())
    throw Error(ErrorCode::MisalignedSequences, "one frame index per probability row required");
  if (window < 1) throw Error(ErrorCode::InvalidConfig, "smoothing window must be positive");
  const std::int64_t half = window / 2;
  std::vector<ProbVector> out(probs.size());
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    while (frames[lo] < frames[i] - half) ++lo;
    if (hi < i) hi = i;
    while (hi + 1 < probs.size() && frames[hi + 1] <= frames[i] + half) ++hi;
    ProbVector s{};
    for (std::size_t j = lo; j <= hi; ++j)
      for (int c = 0; c < kNumClasses; ++c) s[c] += probs[j][c];
    for (int c = 0; c < kNumClasses; ++c) s[c] /= static_cast<double>(hi - lo + 1);
    out[i] = s;
  }
  return out;
}

bool suppressed(Maneuver m, const SideContext& c) {
  if (m == Maneuver::LLC) return c.safe_left <= 0.0 && c.avail_left < 0.0;
  if (m == Maneuver::RLC) return c.safe_right <= 0.0 && c.avail_right < 0.0;
  return false;
}

std::vector<Maneuver> smooth_and_validate(std::span<const ProbVector> probs, std::span<const SideContext> context,
                                          const ThresholdSet& tau, int window) {
  if (probs.size() != context.size())
    throw Error(ErrorCode::MisalignedSequences, std::to_string(probs.size()) + " probability rows vs " +
                                                    std::to_string(context.size()) + " context rows");
  const auto smooth = smooth_probs(probs, window);
  std::vector<Maneuver> out(smooth.size());
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    const Maneuver m = apply_decision_rule(smooth[i], tau);
    out[i] = suppressed(m, context[i]) ? Maneuver::NLC : m;
  }
  return out;
}

std::vector<Maneuver> decide(std::span<const ProbVector> probs, const ThresholdSet& tau) {
  std::vector<Maneuver> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(apply_decision_rule(p, tau));
  return out;
}

std::vector<Maneuver> smooth_matrix_predictions(const FeatureMatrix& m, std::span<const ProbVector> probs,
                                                const ThresholdSet& tau, int window) {
  if (probs.size() != m.rows)
    throw Error(ErrorCode::MisalignedSequences, "one probability row per feature row required");
  auto col = [&](const char* name) -> std::optional<std::size_t> {
    auto it = std::find(m.names.begin(), m.names.end(), name);
    if (it == m.names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - m.names.begin());
  };
  const auto safe_l = col("safe_gap_count_left");
  const auto safe_r = col("safe_gap_count_right");
  const auto adv_l = col("lane_adv_left_min");
  const auto adv_r = col("lane_adv_right_min");
  auto context_of = [&](std::size_t r) {
    SideContext c;
    if (safe_l && adv_l) {
      c.safe_left = m.at(r, *safe_l);
      c.avail_left = m.at(r, *adv_l);
    }
    if (safe_r && adv_r) {
      c.safe_right = m.at(r, *safe_r);
      c.avail_right = m.at(r, *adv_r);
    }
    return c;
  };

  std::vector<Maneuver> out(m.rows, Maneuver::NLC);
  const auto groups = track_groups(m);
  std::map<std::int64_t, std::vector<std::size_t>> by_track;
  for (std::size_t i = 0; i < m.rows; ++i) by_track[groups[i]].push_back(i);
  for (auto& [g, rows] : by_track) {
    if (!m.refs.empty())
      std::stable_sort(rows.begin(), rows.end(),
                       [&](std::size_t a, std::size_t b) { return m.refs[a].anchor_frame < m.refs[b].anchor_frame; });
    std::vector<ProbVector> p;
    std::vector<std::int64_t> f;
    for (std::size_t r : rows) {
      p.push_back(probs[r]);
      f.push_back(m.refs.empty() ? static_cast<std::int64_t>(r) : m.refs[r].anchor_frame);
    }
    const auto smooth = smooth_probs_by_frame(p, f, window);
    std::vector<Maneuver> d(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Maneuver pred = apply_decision_rule(smooth[k], tau);
      d[k] = suppressed(pred, context_of(rows[k])) ? Maneuver::NLC : pred;
    }
    for (std::size_t k = 0; k < rows.size(); ++k) out[rows[k]] = d[k];
  }
  return out;
}

std::string metrics_to_json(const Metrics& m) {
  json j;
  j["count"] = m.count;
  j["accuracy"] = m.accuracy;
  j["macro_f1"] = m.macro_f1;
  j["confusion"] = m.confusion;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& pc = m.per_class[c];
    j["per_class"][std::string(to_string(static_cast<Maneuver>(c)))] = {
        {"precision", pc.precision}, {"recall", pc.recall}, {"f1", pc.f1}, {"support", pc.support}};
  }
  return j.dump(2);
}

namespace {

std::vector<std::uint8_t> as_bytes(const std::vector<Maneuver>& v) {
  std::vector<std::uint8_t> out;
  out.reserve(v.size());
  for (auto m : v) out.push_back(static_cast<std::uint8_t>(m));
  return out;
}

gbdt::Ensemble fit(const FeatureMatrix& train, const ExperimentConfig& cfg, const gbdt::TrainParams& params) {
  const BalanceResult bal = balance(train, cfg.balance);
  gbdt::TrainParams p = params;
  p.class_weights = bal.weights;
  return gbdt::train(bal.data, p);
}

struct FoldOutput {
  std::vector<int> fold;
  std::vector<ProbVector> probs;  // held-out prediction per row
};

FoldOutput cv_predict(const FeatureMatrix& train, const ExperimentConfig& cfg, const gbdt::TrainParams& params) {
  FoldOutput out;
  const int k = cfg.split.cv_folds;
  out.fold = kfold_cv(track_groups(train), k, cfg.split.fold_seed);
  out.probs.resize(train.rows);
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < train.rows; ++i) (out.fold[i] == f ? va : tr).push_back(i);
    const auto model = fit(train.subset(tr), cfg, params);
    const auto probs = gbdt::predict_matrix(model, train.subset(va));
    for (std::size_t i = 0; i < va.size(); ++i) out.probs[va[i]] = probs[i];
  }
  return out;
}

}  // namespace

ThresholdSet cross_validate_thresholds(const FeatureMatrix& train, const ExperimentConfig& cfg) {
  const auto cv = cv_predict(train, cfg, cfg.train);
  std::vector<ThresholdSet> sets;
  for (int f = 0; f < cfg.split.cv_folds; ++f) {
    std::vector<ProbVector> p;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < train.rows; ++i)
      if (cv.fold[i] == f) {
        p.push_back(cv.probs[i]);
        y.push_back(train.labels[i]);
      }
    try {
      sets.push_back(calibrate_thresholds(p, y, cfg.tau_step));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateValidation) throw;
      std::cerr << "warning: fold " << f << " skipped for calibration: " << e.what() << "\n";
    }
  }
  if (sets.empty()) return ThresholdSet{};
  return average_thresholds(sets);
}

double cross_validate_score(const FeatureMatrix& train, const ExperimentConfig& cfg) {
  const auto cv = cv_predict(train, cfg, cfg.train);
  const auto pred = as_bytes(decide(cv.probs, ThresholdSet{}));
  return compute_metrics(pred, train.labels).macro_f1;
}

CellData prepare_cell(const std::vector<Recording>& recordings, double history_window, double horizon,
                      const ExperimentConfig& cfg) {
  std::vector<std::vector<std::vector<LaneChangeEvent>>> events(recordings.size());
  std::vector<LabeledSample> samples;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const auto& rec = recordings[r];
    for (const auto& t : rec.tracks) events[r].push_back(detect_events(t, rec.geometry, cfg.detection, rec.f_s));
    SamplingConfig sc{rec.f_s, history_window, horizon, cfg.stride};
    auto s = build_samples(rec, events[r], sc);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  const auto split = split_by_location(samples, cfg.split);
  std::vector<LabeledSample> train_s, test_s;
  for (auto i : split.train) train_s.push_back(samples[i]);
  for (auto i : split.test) test_s.push_back(samples[i]);

  CellData out;
  out.stats.gap = compute_gap_stats(recordings, events, cfg.split.train_locations);
  out.stats.time_gap = compute_time_gap_stats(recordings, train_s);
  // Sampling here only carries W and T; f_s comes from each recording.
  SamplingConfig sc{recordings.front().f_s, history_window, horizon, cfg.stride};
  const FeatureExtractor ex(cfg.manifest, out.stats, sc, cfg.detection);
  out.train = build_feature_matrix(recordings, train_s, ex);
  out.test = build_feature_matrix(recordings, test_s, ex);
  return out;
}

TrainedCell run_cell(const std::vector<Recording>& recordings, double history_window, double horizon,
                     const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (recordings.empty()) throw Error(ErrorCode::EmptyPartition, "no recordings");
  auto data = prepare_cell(recordings, history_window, horizon, cfg);

  TrainedCell cell;
  cell.result.history_window = history_window;
  cell.result.horizon = horizon;
  cell.result.train_rows = data.train.rows;
  cell.result.test_rows = data.test.rows;
  cell.result.tau = cfg.calibrate && cfg.split.cv_folds >= 2 ? cross_validate_thresholds(data.train, cfg)
                                                             : ThresholdSet{};
  cell.model = fit(data.train, cfg, cfg.train);
  cell.test_probs = gbdt::predict_matrix(cell.model, data.test);
  cell.result.raw = compute_metrics(as_bytes(decide(cell.test_probs, cell.result.tau)), data.test.labels);
  cell.result.smoothed = compute_metrics(
      as_bytes(smooth_matrix_predictions(data.test, cell.test_probs, cell.result.tau, cfg.smooth_window)),
      data.test.labels);
  cell.train = std::move(data.train);
  cell.test = std::move(data.test);
  cell.stats = data.stats;
  cell.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

SweepResult run_sweep(const std::vector<Recording>& recordings, std::span<const double> windows,
                      std::span<const double> horizons, const ExperimentConfig& cfg) {
  SweepResult out;
  for (double t : horizons) {
    double best = -1.0;
    for (double w : windows) {
      auto cell = run_cell(recordings, w, t, cfg);
      if (cell.result.raw.macro_f1 > best) {
        best = cell.result.raw.macro_f1;
        out.best_window[t] = w;
      }
      out.cells.push_back(cell.result);
    }
  }
  return out;
}

std::string sweep_to_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "W,T,train_rows,test_rows,accuracy,macro_f1,f1_NLC,f1_LLC,f1_RLC,smoothed_accuracy,smoothed_macro_f1,"
        "tau_NLC,tau_LLC,tau_RLC,best_W,seconds\n";
  for (const auto& c : r.cells) {
    const auto best = r.best_window.find(c.horizon);
    const bool is_best = best != r.best_window.end() && best->second == c.history_window;
    os << csv::format_double(c.history_window) << ',' << csv::format_double(c.horizon) << ',' << c.train_rows << ','
       << c.test_rows << ',' << csv::format_double(c.raw.accuracy) << ',' << csv::format_double(c.raw.macro_f1);
    for (int k = 0; k < kNumClasses; ++k) os << ',' << csv::format_double(c.raw.per_class[k].f1);
    os << ',' << csv::format_double(c.smoothed.accuracy) << ',' << csv::format_double(c.smoothed.macro_f1);
    for (int k = 0; k < kNumClasses; ++k) os << ',' << csv::format_double(c.tau.tau[k]);
    os << ',' << (is_best ? 1 : 0) << ',' << csv::format_double(c.seconds) << '\n';
  }
  return os.str();
}

SearchResult random_search(const FeatureMatrix& train, const ExperimentConfig& cfg, const SearchSpace& space,
                           int budget, std::uint64_t seed) {
  if (budget < 1) throw Error(ErrorCode::InvalidConfig, "search budget must be positive");
  Rng rng(seed);
  auto pick = [&](const auto& v) { return v[rng.below(v.size())]; };
  SearchResult out;
  std::set<std::string> seen;
  for (int trial = 0; trial < budget; ++trial) {
    gbdt::TrainParams p = cfg.train;
    p.learning_rate = pick(space.learning_rate);
    p.max_leaves = pick(space.max_leaves);
    p.min_data_in_leaf = pick(space.min_data_in_leaf);
    p.lambda = pick(space.lambda);
    p.feature_fraction = pick(space.feature_fraction);
    const auto key = gbdt::train_params_to_json(p);
    if (!seen.insert(key).second) continue;
    ExperimentConfig c = cfg;
    c.train = p;
    const double score = cross_validate_score(train, c);
    out.trials.emplace_back(p, score);
    if (score > out.best_score) {
      out.best_score = score;
      out.best = p;
    }
  }
  return out;
}

}  // namespace lcp
