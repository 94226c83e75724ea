#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "lcp/labeling.hpp"

namespace lcp {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct Metrics {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};  // [truth][predicted]
  std::uint64_t count = 0;
  double accuracy = 0.0;
  std::array<ClassMetrics, kNumClasses> per_class{};
  double macro_f1 = 0.0;
};

/// F1 from counts; 0 when precision + recall is 0.
double f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

Metrics metrics_from_confusion(const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& confusion);
Metrics compute_metrics(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

}  // namespace lcp
