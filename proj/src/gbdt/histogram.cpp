#include "lcp/gbdt/histogram.hpp"

#include <algorithm>

namespace lcp::gbdt {

namespace {

template <typename Bin>
void accumulate(const Bin* column, std::span<const std::size_t> rows, const double* og, const double* oh,
                HistBin* out) {
  const std::size_t n = rows.size();
  for (std::size_t i = 0; i < n; ++i) {
    HistBin& b = out[column[rows[i]]];
    b.g += og[i];
    b.h += oh[i];
    ++b.count;
  }
}

}  // namespace

void build_histogram(const BinIndex& idx, std::span<const std::size_t> rows, std::span<const double> g,
                     std::span<const double> h, std::span<const char> feature_mask, Histogram& out) {
  out.bins.assign(idx.total_bins(), HistBin{});
  // Gradients gathered in row order so the per-feature loops read them contiguously.
  std::vector<double> og(rows.size()), oh(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    og[i] = g[rows[i]];
    oh[i] = h[rows[i]];
  }
  const auto nc = static_cast<std::ptrdiff_t>(idx.cols());
#pragma omp parallel for schedule(dynamic, 4) if (rows.size() > 4096)
  for (std::ptrdiff_t fi = 0; fi < nc; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    if (!feature_mask.empty() && !feature_mask[f]) continue;
    HistBin* dst = out.bins.data() + idx.offset(f);
    if (idx.wide()) accumulate(idx.column16(f), rows, og.data(), oh.data(), dst);
    else accumulate(idx.column8(f), rows, og.data(), oh.data(), dst);
  }
}

void subtract_histogram(const Histogram& parent, const Histogram& child, Histogram& out) {
  out.bins.resize(parent.bins.size());
  for (std::size_t i = 0; i < parent.bins.size(); ++i) {
    out.bins[i].g = parent.bins[i].g - child.bins[i].g;
    out.bins[i].h = parent.bins[i].h - child.bins[i].h;
    out.bins[i].count = parent.bins[i].count - child.bins[i].count;
  }
}

}  // namespace lcp::gbdt
