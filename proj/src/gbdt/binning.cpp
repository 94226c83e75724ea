#include "lcp/gbdt/binning.hpp"

#include <algorithm>
#include <cmath>

#include "lcp/error.hpp"

namespace lcp::gbdt {

int FeatureBins::bin_of(double v) const {
  return static_cast<int>(std::lower_bound(upper.begin(), upper.end(), v) - upper.begin());
}

namespace {

// Cut strictly below b so that a falls left and b falls right.
double cut_between(double a, double b) {
  const double mid = a + (b - a) / 2.0;
  return mid < b ? mid : a;
}

}  // namespace

FeatureBins make_bins(std::span<const double> values, int max_bins) {
  if (max_bins < 2) throw Error(ErrorCode::InvalidParams, "max_bins must be at least 2");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct;
  std::vector<std::size_t> counts;
  for (double v : sorted) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }
  FeatureBins fb;
  if (distinct.size() <= 1) return fb;
  if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) fb.upper.push_back(cut_between(distinct[i], distinct[i + 1]));
    return fb;
  }
  std::size_t remaining = sorted.size();
  int bins_left = max_bins;
  std::size_t in_bin = 0;
  for (std::size_t i = 0; i + 1 < distinct.size() && bins_left > 1; ++i) {
    in_bin += counts[i];
    const double target = static_cast<double>(remaining) / bins_left;
    const std::size_t distinct_after = distinct.size() - i - 1;
    // Close when the bin is full, or when every later distinct value needs its own bin.
    if (static_cast<double>(in_bin) >= target || distinct_after < static_cast<std::size_t>(bins_left)) {
      fb.upper.push_back(cut_between(distinct[i], distinct[i + 1]));
      remaining -= in_bin;
      in_bin = 0;
      --bins_left;
    }
  }
  return fb;
}

void BinIndex::finish_layout() {
  offsets_.assign(features_.size() + 1, 0);
  wide_ = false;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    offsets_[f + 1] = offsets_[f] + static_cast<std::size_t>(features_[f].num_bins());
    if (features_[f].num_bins() > 256) wide_ = true;
  }
}

void BinIndex::fill(std::span<const float> values) {
  const std::size_t cols = features_.size();
  if (wide_) bins16_.assign(rows_ * cols, 0);
  else bins8_.assign(rows_ * cols, 0);
  const auto nc = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t fi = 0; fi < nc; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    const auto& fb = features_[f];
    for (std::size_t r = 0; r < rows_; ++r) {
      const int b = fb.bin_of(static_cast<double>(values[r * cols + f]));
      if (wide_) bins16_[f * rows_ + r] = static_cast<std::uint16_t>(b);
      else bins8_[f * rows_ + r] = static_cast<std::uint8_t>(b);
    }
  }
}

BinIndex BinIndex::build(std::span<const float> values, std::size_t rows, std::size_t cols, int max_bins) {
  if (values.size() != rows * cols) throw Error(ErrorCode::LengthMismatch, "matrix size does not match shape");
  for (float v : values)
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParams, "training matrix holds a non-finite value");
  BinIndex idx;
  idx.rows_ = rows;
  idx.features_.resize(cols);
  const auto nc = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t fi = 0; fi < nc; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    std::vector<double> col(rows);
    for (std::size_t r = 0; r < rows; ++r) col[r] = values[r * cols + f];
    idx.features_[f] = make_bins(col, max_bins);
  }
  idx.finish_layout();
  idx.fill(values);
  return idx;
}

BinIndex BinIndex::apply(const std::vector<FeatureBins>& bins, std::span<const float> values, std::size_t rows,
                         std::size_t cols) {
  if (bins.size() != cols || values.size() != rows * cols)
    throw Error(ErrorCode::LengthMismatch, "matrix shape does not match bin layout");
  BinIndex idx;
  idx.rows_ = rows;
  idx.features_ = bins;
  idx.finish_layout();
  idx.fill(values);
  return idx;
}

}  // namespace lcp::gbdt
