#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcp/features.hpp"
#include "lcp/labeling.hpp"

namespace lcp {

struct BalanceConfig {
  int smote_k = 5;
  std::array<double, kNumClasses> target_ratio{29.0, 1.0, 1.0};  // NLC:LLC:RLC
  double alpha = 0.5;
  std::uint64_t seed = 7;
  bool tomek = true;

  void validate() const;
};

/// "29:1:1" -> {29, 1, 1}.
std::array<double, kNumClasses> parse_ratio(std::string_view s);
std::string format_ratio(const std::array<double, kNumClasses>& r);

struct SmoteResult {
  std::size_t dim = 0;
  std::vector<double> rows;                               // row-major synthetic points
  std::vector<std::pair<std::size_t, std::size_t>> parents;  // (base, neighbor) indices into the input
  std::vector<double> u;
};

/// Interpolates `n_new` points between minority rows and one of their k
/// nearest same-class neighbors. Distances use coordinates multiplied by
/// `scale` (empty = unscaled); interpolation happens in the input space.
SmoteResult smote_oversample(std::span<const double> rows, std::size_t dim, std::span<const double> scale, int k,
                             std::size_t n_new, std::uint64_t seed);

/// Rows to drop: the majority-class member of every mutual nearest-neighbor
/// pair with different labels. Links not involving `majority` drop nothing.
std::vector<std::size_t> tomek_links(std::span<const double> rows, std::size_t dim, std::span<const std::uint8_t> labels,
                                     std::uint8_t majority);

struct ClassWeights {
  std::array<double, kNumClasses> w{1.0, 1.0, 1.0};
};

ClassWeights class_weights(const std::array<std::uint64_t, kNumClasses>& counts, double alpha);
std::string class_weights_to_json(const ClassWeights& w, const std::array<std::uint64_t, kNumClasses>& counts,
                                  double alpha);
ClassWeights class_weights_from_json(const std::string& text);

struct ThresholdSet {
  std::array<double, kNumClasses> tau{1.0, 1.0, 1.0};
};

/// argmax_c p_c / tau_c; ties go to the earlier class.
Maneuver apply_decision_rule(std::span<const double> p, const ThresholdSet& t);
/// Grid search over tau_LLC, tau_RLC in {step, 2 step, ..., 1} maximizing
/// macro F1; ties keep the larger thresholds.
ThresholdSet calibrate_thresholds(std::span<const std::array<double, kNumClasses>> probs,
                                  std::span<const std::uint8_t> labels, double step = 0.05);
ThresholdSet average_thresholds(std::span<const ThresholdSet> sets);
std::string thresholds_to_json(const ThresholdSet& t);
ThresholdSet thresholds_from_json(const std::string& text);

std::array<std::uint64_t, kNumClasses> class_counts(std::span<const std::uint8_t> labels);

struct BalanceResult {
  FeatureMatrix data;
  ClassWeights weights;
  std::array<std::uint64_t, kNumClasses> before{};
  std::array<std::uint64_t, kNumClasses> after{};
  std::size_t synthetic = 0;
  std::size_t tomek_removed = 0;
  std::vector<std::pair<std::size_t, std::size_t>> parents;  // per synthetic row, indices into the input rows
  std::size_t first_synthetic_row = 0;
};

/// SMOTE in z-scored space, then Tomek cleaning, then inverse-frequency
/// weights from the final counts. Synthetic rows are appended last and carry
/// SampleRef ids of -1.
BalanceResult balance(const FeatureMatrix& data, const BalanceConfig& cfg);

}  // namespace lcp
