#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lcp/gbdt/binning.hpp"

namespace lcp::gbdt {

struct HistBin {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t count = 0;
};

/// Gradient/Hessian sums per (feature, bin), laid out by BinIndex offsets.
struct Histogram {
  std::vector<HistBin> bins;

  std::span<const HistBin> feature(const BinIndex& idx, std::size_t f) const {
    return {bins.data() + idx.offset(f), static_cast<std::size_t>(idx.num_bins(f))};
  }
};

/// Sums g and h (indexed by row id) over `rows` for every feature whose mask
/// entry is non-zero (empty mask = all). Deterministic regardless of threads.
void build_histogram(const BinIndex& idx, std::span<const std::size_t> rows, std::span<const double> g,
                     std::span<const double> h, std::span<const char> feature_mask, Histogram& out);

/// out = parent - child, bin by bin.
void subtract_histogram(const Histogram& parent, const Histogram& child, Histogram& out);

}  // namespace lcp::gbdt
