#include "lcp/gbdt/objective.hpp"

#include <algorithm>
#include <cmath>

#include "lcp/error.hpp"

namespace lcp::gbdt {

Probs softmax_probs(std::span<const double> z) {
  if (z.size() != kNumClasses) throw Error(ErrorCode::NonFiniteScore, "score vector needs one entry per class");
  double m = z[0];
  for (double v : z) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteScore, "non-finite raw score");
    m = std::max(m, v);
  }
  Probs p;
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(z[c] - m);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

GradHess grad_hess(std::span<const std::uint8_t> labels, std::span<const Probs> probs, std::span<const double> weights) {
  if (labels.size() != probs.size() || labels.size() != weights.size())
    throw Error(ErrorCode::LengthMismatch, "labels, probabilities and weights differ in length");
  GradHess gh;
  gh.rows = labels.size();
  gh.g.resize(gh.rows * kNumClasses);
  gh.h.resize(gh.rows * kNumClasses);
  for (std::size_t i = 0; i < gh.rows; ++i) {
    for (int c = 0; c < kNumClasses; ++c) {
      const double p = probs[i][c];
      const double y = labels[i] == c ? 1.0 : 0.0;
      gh.g[i * kNumClasses + c] = weights[i] * (p - y);
      gh.h[i * kNumClasses + c] = weights[i] * p * (1.0 - p);
    }
  }
  return gh;
}

double weighted_log_loss(std::span<const std::uint8_t> labels, std::span<const Probs> probs,
                         std::span<const double> weights) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    num += weights[i] * -std::log(std::max(probs[i][labels[i]], 1e-300));
    den += weights[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace lcp::gbdt
