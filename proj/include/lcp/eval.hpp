#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcp/features.hpp"
#include "lcp/gbdt/booster.hpp"
#include "lcp/imbalance.hpp"
#include "lcp/labeling.hpp"
#include "lcp/metrics.hpp"

namespace lcp {

/// Location-disjoint train/test split plus the CV protocol on the train side.
struct SplitSpec {
  std::vector<int> train_locations{0, 1, 2, 3};
  std::vector<int> test_locations{4, 5};
  int cv_folds = 5;
  std::uint64_t fold_seed = 7;

  SplitSpec() = default;
  /// Throws OverlappingSplit when a location is on both sides.
  SplitSpec(std::vector<int> train, std::vector<int> test, int folds = 5, std::uint64_t seed = 7);

  void validate() const;
  bool is_train(int location) const;
  bool is_test(int location) const;
};

/// Profile defaults: highd tests on {4, 5}, exid on {4, 5, 6}.
SplitSpec default_split(DatasetProfile profile);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::size_t dropped = 0;  // rows whose location is on neither side
};

/// EmptyPartition when either side ends up empty.
SplitIndices split_by_location(std::span<const int> locations, const SplitSpec& spec);
SplitIndices split_by_location(const std::vector<LabeledSample>& samples, const SplitSpec& spec);
SplitIndices split_by_location(const FeatureMatrix& m, const SplitSpec& spec);

/// Fold id per row. Rows sharing a group key always share a fold; groups are
/// shuffled under `seed` and dealt round-robin. TooFewGroups when there are
/// fewer groups than folds.
std::vector<int> kfold_cv(std::span<const std::int64_t> groups, int folds, std::uint64_t seed);

/// Group key for a (recording, track) pair.
std::int64_t track_group(int recording_id, int track_id);
std::vector<std::int64_t> track_groups(const FeatureMatrix& m);

using ProbVector = std::array<double, kNumClasses>;

/// Centered moving average; the window is truncated at the sequence ends.
std::vector<ProbVector> smooth_probs(std::span<const ProbVector> probs, int window = 5);

/// Same average over a sequence sampled at the given (increasing) frame
/// indices: each entry averages the entries within window / 2 frames of it.
std::vector<ProbVector> smooth_probs_by_frame(std::span<const ProbVector> probs, std::span<const std::int64_t> frames,
                                              int window = 5);

/// Per-frame physical context for the suppression rule.
struct SideContext {
  double safe_left = 1.0;
  double safe_right = 1.0;
  double avail_left = 0.0;
  double avail_right = 0.0;
};

/// Smooths, applies the decision rule, then demotes LLC/RLC to NLC when the
/// target side has no safe gap and negative availability.
std::vector<Maneuver> smooth_and_validate(std::span<const ProbVector> probs, std::span<const SideContext> context,
                                          const ThresholdSet& tau, int window = 5);

/// True when the side context says the target side is blocked.
bool suppressed(Maneuver m, const SideContext& c);

/// Applies smoothing and suppression per track over a feature matrix with
/// refs, ordering each track's rows by anchor. The window is in frames, so
/// with a stride of 5 or more smoothing leaves samples untouched. Context
/// columns are looked up by name; a side whose columns are missing is never
/// suppressed.
std::vector<Maneuver> smooth_matrix_predictions(const FeatureMatrix& m, std::span<const ProbVector> probs,
                                                const ThresholdSet& tau, int window = 5);

std::vector<Maneuver> decide(std::span<const ProbVector> probs, const ThresholdSet& tau);

std::string metrics_to_json(const Metrics& m);

/// Everything a single (W, T) experiment needs besides the recordings.
struct ExperimentConfig {
  FeatureManifest manifest;
  DetectionParams detection;
  int stride = 5;
  BalanceConfig balance;
  gbdt::TrainParams train;
  SplitSpec split;
  bool calibrate = true;  // in-fold threshold calibration on the train split
  int smooth_window = 5;
  double tau_step = 0.05;
};

struct CellResult {
  double history_window = 0.0;
  double horizon = 0.0;
  Metrics raw;
  Metrics smoothed;
  ThresholdSet tau;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  double seconds = 0.0;
};

/// Per-fold calibration: balance and train on k-1 folds, calibrate on the
/// held-out fold, average the thresholds.
ThresholdSet cross_validate_thresholds(const FeatureMatrix& train, const ExperimentConfig& cfg);

/// Macro F1 of the CV held-out predictions under the given params.
double cross_validate_score(const FeatureMatrix& train, const ExperimentConfig& cfg);

struct TrainedCell {
  FeatureMatrix train;
  FeatureMatrix test;
  NeighborStats stats;
  gbdt::Ensemble model;
  std::vector<ProbVector> test_probs;
  CellResult result;
};

/// Label, extract, balance, train and evaluate one (W, T) cell.
TrainedCell run_cell(const std::vector<Recording>& recordings, double history_window, double horizon,
                     const ExperimentConfig& cfg);

/// Builds the location-split feature matrices for one (W, T) cell.
struct CellData {
  FeatureMatrix train;
  FeatureMatrix test;
  NeighborStats stats;
};
CellData prepare_cell(const std::vector<Recording>& recordings, double history_window, double horizon,
                      const ExperimentConfig& cfg);

struct SweepResult {
  std::vector<CellResult> cells;           // ordered by (T, W)
  std::map<double, double> best_window;    // T -> W with the best test macro F1
};

SweepResult run_sweep(const std::vector<Recording>& recordings, std::span<const double> windows,
                      std::span<const double> horizons, const ExperimentConfig& cfg);
std::string sweep_to_csv(const SweepResult& r);

/// Budgeted random search over a fixed grid, scored by grouped CV macro F1.
struct SearchSpace {
  std::vector<double> learning_rate{0.05, 0.1, 0.2};
  std::vector<int> max_leaves{15, 31, 63};
  std::vector<int> min_data_in_leaf{10, 20, 50};
  std::vector<double> lambda{0.0, 1.0, 5.0};
  std::vector<double> feature_fraction{0.7, 1.0};
};

struct SearchResult {
  gbdt::TrainParams best;
  double best_score = -1.0;
  std::vector<std::pair<gbdt::TrainParams, double>> trials;
};

SearchResult random_search(const FeatureMatrix& train, const ExperimentConfig& cfg, const SearchSpace& space,
                           int budget, std::uint64_t seed);

}  // namespace lcp
