#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcp/features.hpp"
#include "lcp/gbdt/objective.hpp"
#include "lcp/gbdt/tree.hpp"
#include "lcp/imbalance.hpp"

namespace lcp::gbdt {

/// Direction per (class, feature name): +1 raw score non-decreasing in the
/// feature, -1 non-increasing. Absent entries are unconstrained.
struct MonotoneSpec {
  std::array<std::map<std::string, int>, kNumClasses> directions;

  bool empty() const;
  /// Per-class direction vectors aligned to `names`; UnknownFeature for names
  /// missing from the list.
  std::array<std::vector<std::int8_t>, kNumClasses> resolve(const std::vector<std::string>& names) const;
};

/// Constraint directions declared in a feature manifest.
MonotoneSpec monotone_from_manifest(const FeatureManifest& manifest);
std::string monotone_to_json(const MonotoneSpec& m);
MonotoneSpec monotone_from_json(const std::string& text);

struct GossParams {
  double a = 0.2;
  double b = 0.1;
};

struct TrainParams {
  int num_rounds = 100;
  double learning_rate = 0.1;
  double lambda = 1.0;
  double gamma = 0.0;
  int max_leaves = 31;
  int max_depth = -1;
  int min_data_in_leaf = 20;
  int max_bins = 255;
  double feature_fraction = 1.0;
  std::optional<GossParams> goss;
  ClassWeights class_weights;
  MonotoneSpec monotone;
  std::uint64_t seed = 7;

  void validate() const;
  TreeParams tree_params() const;
};

/// Reads the JSON parameter file; unknown keys are rejected.
TrainParams train_params_from_json(const std::string& text, TrainParams base = {});
std::string train_params_to_json(const TrainParams& p);

struct GossSample {
  std::vector<std::size_t> rows;        // ascending
  std::vector<double> multiplier;       // per entry of rows
};

/// Keeps the ceil(a n) rows with the largest gradient norm and samples
/// ceil(b n) of the rest uniformly with multiplier (1 - a) / b.
GossSample goss_sample(std::span<const double> grad_norm, double a, double b, std::uint64_t seed);

struct Ensemble {
  int num_class = kNumClasses;
  double learning_rate = 0.1;
  std::array<double, kNumClasses> base_scores{};
  std::vector<Tree> trees;  // round-major: trees[round * K + class]
  std::uint64_t manifest_hash = 0;
  std::vector<std::string> feature_names;
  MonotoneSpec monotone;
  TrainParams params;
  std::vector<double> train_loss;  // weighted log-loss before round 1, then after each round

  std::size_t num_features() const { return feature_names.size(); }
  std::array<double, kNumClasses> raw_scores(std::span<const float> x) const;
  Probs predict_probs(std::span<const float> x) const;
};

/// Rows are weighted by class_weights[label].
Ensemble train(const FeatureMatrix& data, const TrainParams& params);

/// ManifestMismatch when the matrix hash or width disagrees with the model.
std::vector<Probs> predict_matrix(const Ensemble& model, const FeatureMatrix& data);

std::string model_to_json(const Ensemble& m);
Ensemble model_from_json(const std::string& text);
void save_model(const Ensemble& m, const std::filesystem::path& path);
Ensemble load_model(const std::filesystem::path& path);

}  // namespace lcp::gbdt
