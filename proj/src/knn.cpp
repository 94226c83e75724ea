#include "lcp/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lcp {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

KnnIndex::KnnIndex(std::vector<double> points, std::size_t dim) : points_(std::move(points)), dim_(dim) {
  n_ = dim_ ? points_.size() / dim_ : 0;
  axis_.assign(dim_, 0.0);
  if (n_ == 0 || dim_ == 0) return;

  // Leading principal direction by power iteration on the centered data.
  std::vector<double> mean(dim_, 0.0);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) mean[j] += points_[i * dim_ + j];
  for (auto& m : mean) m /= static_cast<double>(n_);
  std::vector<double> v(dim_);
  for (std::size_t j = 0; j < dim_; ++j) v[j] = 1.0 + 0.01 * static_cast<double>(j);
  std::vector<double> next(dim_);
  for (int it = 0; it < 20; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* p = points_.data() + i * dim_;
      double dot = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) dot += (p[j] - mean[j]) * v[j];
      for (std::size_t j = 0; j < dim_; ++j) next[j] += dot * (p[j] - mean[j]);
    }
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) break;
    for (std::size_t j = 0; j < dim_; ++j) v[j] = next[j] / norm;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (std::size_t j = 0; j < dim_; ++j) axis_[j] = v[j] / norm;

  std::vector<double> proj(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) dot += points_[i * dim_ + j] * axis_[j];
    proj[i] = dot;
  }
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return proj[a] < proj[b] || (proj[a] == proj[b] && a < b);
  });
  proj_sorted_.resize(n_);
  rank_.resize(n_);
  for (std::size_t r = 0; r < n_; ++r) {
    proj_sorted_[r] = proj[order_[r]];
    rank_[order_[r]] = r;
  }
}

std::vector<std::size_t> KnnIndex::neighbors_of(std::size_t self, std::size_t k) const {
  return query(point(self), k, self);
}

std::vector<std::size_t> KnnIndex::query(std::span<const double> q, std::size_t k, std::size_t exclude) const {
  std::vector<std::pair<double, std::size_t>> best;  // max-heap by (distance, index)
  if (k == 0 || n_ == 0) return {};
  double qp = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) qp += q[j] * axis_[j];
  const auto start = static_cast<std::size_t>(std::lower_bound(proj_sorted_.begin(), proj_sorted_.end(), qp) -
                                              proj_sorted_.begin());
  auto consider = [&](std::size_t id) {
    if (id == exclude) return;
    const double d = squared_distance(point(id), q);
    const std::pair<double, std::size_t> cand{d, id};
    if (best.size() < k) {
      best.push_back(cand);
      std::push_heap(best.begin(), best.end());
    } else if (cand < best.front()) {
      std::pop_heap(best.begin(), best.end());
      best.back() = cand;
      std::push_heap(best.begin(), best.end());
    }
  };
  std::size_t lo = start;  // next candidate on the left is lo - 1
  std::size_t hi = start;  // next candidate on the right is hi
  const double inf = std::numeric_limits<double>::infinity();
  while (lo > 0 || hi < n_) {
    const double gl = lo > 0 ? qp - proj_sorted_[lo - 1] : inf;
    const double gr = hi < n_ ? proj_sorted_[hi] - qp : inf;
    const double gap = std::min(gl, gr);
    // Equal distances must still be visited so index tie-breaks stay exact.
    if (best.size() == k && gap * gap > best.front().first * (1.0 + 1e-12) + 1e-300) break;
    if (gl <= gr) consider(order_[--lo]);
    else consider(order_[hi++]);
  }
  std::sort_heap(best.begin(), best.end());
  std::vector<std::size_t> out;
  out.reserve(best.size());
  for (const auto& b : best) out.push_back(b.second);
  return out;
}

}  // namespace lcp
