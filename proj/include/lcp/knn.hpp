#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lcp {

/// Exact Euclidean nearest-neighbor search over a fixed point set. Points are
/// sorted by their projection on the leading principal direction; a query
/// scans outward and stops once the projection gap alone exceeds the current
/// k-th distance. Ties resolve to the lower point index.
class KnnIndex {
 public:
  /// `points` is row-major n x d, already scaled as the distance requires.
  KnnIndex(std::vector<double> points, std::size_t dim);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }

  /// k nearest points to point `self`, excluding itself, nearest first.
  std::vector<std::size_t> neighbors_of(std::size_t self, std::size_t k) const;
  /// k nearest to an arbitrary query, nearest first. `exclude` may name one index to skip.
  std::vector<std::size_t> query(std::span<const double> q, std::size_t k,
                                 std::size_t exclude = static_cast<std::size_t>(-1)) const;

 private:
  std::vector<double> points_;
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> axis_;
  std::vector<double> proj_sorted_;
  std::vector<std::size_t> order_;  // point ids by projection
  std::vector<std::size_t> rank_;   // position of each point in order_
};

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace lcp
