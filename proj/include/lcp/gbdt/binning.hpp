#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lcp::gbdt {

/// Bin b of a feature holds values v with upper[b-1] < v <= upper[b]; the
/// last bin is open above. `upper` has num_bins - 1 entries.
struct FeatureBins {
  std::vector<double> upper;

  int num_bins() const { return static_cast<int>(upper.size()) + 1; }
  int bin_of(double v) const;
};

/// Quantile cut points for one column. One bin per distinct value when there
/// are at most `max_bins` of them; otherwise greedy near-equal-count bins.
FeatureBins make_bins(std::span<const double> values, int max_bins);

/// Binned training matrix, stored feature-major. Uses 8-bit bin ids when every
/// feature has at most 256 bins, else 16-bit.
class BinIndex {
 public:
  BinIndex() = default;
  /// `values` is row-major rows x cols.
  static BinIndex build(std::span<const float> values, std::size_t rows, std::size_t cols, int max_bins);
  /// Bins new rows against existing cut points.
  static BinIndex apply(const std::vector<FeatureBins>& bins, std::span<const float> values, std::size_t rows,
                        std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return features_.size(); }
  const FeatureBins& feature(std::size_t f) const { return features_[f]; }
  const std::vector<FeatureBins>& features() const { return features_; }
  int num_bins(std::size_t f) const { return features_[f].num_bins(); }
  /// Offset of feature f's first bin in a flat histogram.
  std::size_t offset(std::size_t f) const { return offsets_[f]; }
  std::size_t total_bins() const { return offsets_.empty() ? 0 : offsets_.back(); }
  bool wide() const { return wide_; }

  int bin(std::size_t row, std::size_t f) const {
    return wide_ ? bins16_[f * rows_ + row] : bins8_[f * rows_ + row];
  }
  const std::uint8_t* column8(std::size_t f) const { return bins8_.data() + f * rows_; }
  const std::uint16_t* column16(std::size_t f) const { return bins16_.data() + f * rows_; }

 private:
  void finish_layout();
  void fill(std::span<const float> values);

  std::size_t rows_ = 0;
  std::vector<FeatureBins> features_;
  std::vector<std::size_t> offsets_;  // cols + 1 entries
  bool wide_ = false;
  std::vector<std::uint8_t> bins8_;
  std::vector<std::uint16_t> bins16_;
};

}  // namespace lcp::gbdt
