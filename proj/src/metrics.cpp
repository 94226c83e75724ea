#include "lcp/metrics.hpp"

#include <string>

#include "lcp/error.hpp"

namespace lcp {

double f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

Metrics metrics_from_confusion(const std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>& confusion) {
  Metrics m;
  m.confusion = confusion;
  std::uint64_t correct = 0;
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) {
      m.count += confusion[t][p];
      if (t == p) correct += confusion[t][p];
    }
  m.accuracy = m.count ? static_cast<double>(correct) / static_cast<double>(m.count) : 0.0;
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::uint64_t tp = confusion[c][c], fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += confusion[o][c];
      fn += confusion[c][o];
    }
    auto& pc = m.per_class[c];
    pc.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    pc.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    pc.f1 = f1_from_counts(tp, fp, fn);
    pc.support = tp + fn;
    sum += pc.f1;
  }
  m.macro_f1 = sum / kNumClasses;
  return m;
}

Metrics compute_metrics(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(predicted.size()) + " predictions for " +
                                               std::to_string(truth.size()) + " labels");
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> confusion{};
  for (std::size_t i = 0; i < truth.size(); ++i) ++confusion[truth[i]][predicted[i]];
  return metrics_from_confusion(confusion);
}

}  // namespace lcp
