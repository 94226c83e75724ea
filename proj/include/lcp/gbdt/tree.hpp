#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "lcp/gbdt/binning.hpp"
#include "lcp/gbdt/histogram.hpp"

namespace lcp::gbdt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct TreeNode {
  int feature = -1;  // -1 for leaves
  int bin = 0;       // rows with bin <= this go left
  double threshold = 0.0;  // raw value: x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output before shrinkage
  double lower = -kInf;
  double upper = kInf;
  double gain = 0.0;
  std::uint32_t count = 0;
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  int num_leaves() const;
  int depth() const;
  const TreeNode& leaf_for(std::span<const float> x) const;
  double predict(std::span<const float> x) const { return leaf_for(x).value; }
  double predict(std::span<const double> x) const;
  /// Traverses with bin ids of one row of the training index.
  double predict_binned(const BinIndex& idx, std::size_t row) const;
};

struct TreeParams {
  int max_leaves = 31;
  int max_depth = -1;  // <= 0: unlimited
  int min_data_in_leaf = 20;
  double lambda = 1.0;
  double gamma = 0.0;
};

/// Regularized split gain from the four child sums.
double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma);

/// Leaf output -G / (H + lambda) clipped to [lower, upper].
double leaf_value(double g, double h, double lambda, double lower = -kInf, double upper = kInf);

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t count = 0;
  double lower = -kInf;
  double upper = kInf;
};

struct SplitCandidate {
  bool valid = false;
  int feature = -1;
  int bin = 0;
  double gain = 0.0;
  double left_g = 0.0, left_h = 0.0;
  std::uint32_t left_count = 0;
  double left_value = 0.0;
  double right_value = 0.0;
};

/// Best admissible split of a node: both children hold at least
/// min_data_in_leaf rows, gain is positive, and for a feature constrained +1
/// (-1) the left output does not exceed (fall below) the right output.
/// Scans features in index order and bins in ascending order; ties keep the
/// first candidate.
SplitCandidate find_best_split(const BinIndex& idx, const Histogram& hist, const NodeStats& node,
                               const TreeParams& params, std::span<const std::int8_t> monotone,
                               std::span<const char> feature_mask);

/// Leaf-wise growth on `rows` (any order; sorted internally). g and h are
/// indexed by row id. Empty monotone/mask spans mean unconstrained/all.
Tree grow_tree(const BinIndex& idx, std::span<const std::size_t> rows, std::span<const double> g,
               std::span<const double> h, const TreeParams& params, std::span<const std::int8_t> monotone = {},
               std::span<const char> feature_mask = {});

}  // namespace lcp::gbdt
