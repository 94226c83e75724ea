#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lcp/labeling.hpp"

namespace lcp::gbdt {

using Probs = std::array<double, kNumClasses>;

/// Max-shifted softmax. NonFiniteScore on NaN or infinite input.
Probs softmax_probs(std::span<const double> z);

/// Per (row, class) first and second derivatives of the weighted softmax
/// cross-entropy, stored row-major (row * K + class).
struct GradHess {
  std::size_t rows = 0;
  std::vector<double> g;
  std::vector<double> h;

  double grad(std::size_t r, int c) const { return g[r * kNumClasses + static_cast<std::size_t>(c)]; }
  double hess(std::size_t r, int c) const { return h[r * kNumClasses + static_cast<std::size_t>(c)]; }
};

/// g = w (p - y), h = w p (1 - p).
GradHess grad_hess(std::span<const std::uint8_t> labels, std::span<const Probs> probs, std::span<const double> weights);

/// Weighted mean of -log p_{i, y_i}.
double weighted_log_loss(std::span<const std::uint8_t> labels, std::span<const Probs> probs,
                         std::span<const double> weights);

}  // namespace lcp::gbdt
