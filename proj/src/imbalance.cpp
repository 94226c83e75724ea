#include "lcp/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lcp/csv.hpp"
#include "lcp/error.hpp"
#include "lcp/knn.hpp"
#include "lcp/metrics.hpp"
#include "lcp/random.hpp"

namespace lcp {

using json = nlohmann::json;

void BalanceConfig::validate() const {
  if (smote_k < 1) throw Error(ErrorCode::InvalidConfig, "smote_k must be at least 1");
  for (double r : target_ratio)
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::InvalidConfig, "ratio terms must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in [0, 1]");
}

std::array<double, kNumClasses> parse_ratio(std::string_view s) {
  std::vector<std::string_view> parts;
  csv::split(s, ':', parts);
  if (parts.size() != kNumClasses) throw Error(ErrorCode::InvalidConfig, "ratio needs three terms: " + std::string(s));
  std::array<double, kNumClasses> r{};
  for (int c = 0; c < kNumClasses; ++c) {
    auto v = csv::parse_double(parts[c]);
    if (!v || !(*v > 0.0)) throw Error(ErrorCode::InvalidConfig, "bad ratio term in " + std::string(s));
    r[c] = *v;
  }
  return r;
}

std::string format_ratio(const std::array<double, kNumClasses>& r) {
  return csv::format_double(r[0]) + ":" + csv::format_double(r[1]) + ":" + csv::format_double(r[2]);
}

SmoteResult smote_oversample(std::span<const double> rows, std::size_t dim, std::span<const double> scale, int k,
                             std::size_t n_new, std::uint64_t seed) {
  const std::size_t m = dim ? rows.size() / dim : 0;
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be at least 1");
  if (m < static_cast<std::size_t>(k) + 1)
    throw Error(ErrorCode::TooFewMinoritySamples,
                std::to_string(m) + " minority rows cannot support k = " + std::to_string(k));
  SmoteResult out;
  out.dim = dim;
  if (n_new == 0) return out;

  std::vector<double> scaled(rows.begin(), rows.end());
  if (!scale.empty())
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < dim; ++j) scaled[i * dim + j] *= scale[j];
  const KnnIndex index(std::move(scaled), dim);

  // Neighbor lists only for rows that will serve as a base.
  const std::size_t bases = std::min(m, n_new);
  std::vector<std::vector<std::size_t>> nn(bases);
  const auto nb = static_cast<std::ptrdiff_t>(bases);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < nb; ++i)
    nn[static_cast<std::size_t>(i)] = index.neighbors_of(static_cast<std::size_t>(i), static_cast<std::size_t>(k));

  Rng rng(seed);
  out.rows.reserve(n_new * dim);
  for (std::size_t s = 0; s < n_new; ++s) {
    const std::size_t base = s % bases;
    const auto& cand = nn[base];
    const std::size_t pick = cand[rng.below(cand.size())];
    const double u = rng.uniform();
    for (std::size_t j = 0; j < dim; ++j) {
      const double x = rows[base * dim + j];
      out.rows.push_back(x + u * (rows[pick * dim + j] - x));
    }
    out.parents.emplace_back(base, pick);
    out.u.push_back(u);
  }
  return out;
}

std::vector<std::size_t> tomek_links(std::span<const double> rows, std::size_t dim, std::span<const std::uint8_t> labels,
                                     std::uint8_t majority) {
  const std::size_t n = labels.size();
  if (n < 2) return {};
  const KnnIndex index(std::vector<double>(rows.begin(), rows.end()), dim);
  std::vector<std::size_t> minority;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] != majority) minority.push_back(i);
  std::vector<char> drop(n, 0);
  const auto nm = static_cast<std::ptrdiff_t>(minority.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t q = 0; q < nm; ++q) {
    const std::size_t i = minority[static_cast<std::size_t>(q)];
    const auto nn = index.neighbors_of(i, 1);
    if (nn.empty() || labels[nn[0]] != majority) continue;
    const auto back = index.neighbors_of(nn[0], 1);
    if (!back.empty() && back[0] == i) drop[nn[0]] = 1;  // nn[0] has one nearest neighbor, so one writer
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (drop[i]) out.push_back(i);
  return out;
}

ClassWeights class_weights(const std::array<std::uint64_t, kNumClasses>& counts, double alpha) {
  double total = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0)
      throw Error(ErrorCode::EmptyClass, std::string(to_string(static_cast<Maneuver>(c))) + " has no rows");
    total += static_cast<double>(counts[c]);
  }
  ClassWeights w;
  for (int c = 0; c < kNumClasses; ++c)
    w.w[c] = alpha == 0.0 ? 1.0 : std::pow(total / (kNumClasses * static_cast<double>(counts[c])), alpha);
  return w;
}

std::string class_weights_to_json(const ClassWeights& w, const std::array<std::uint64_t, kNumClasses>& counts,
                                  double alpha) {
  json j;
  j["alpha"] = alpha;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::string name(to_string(static_cast<Maneuver>(c)));
    j["weights"][name] = w.w[c];
    j["counts"][name] = counts[c];
  }
  return j.dump(2);
}

ClassWeights class_weights_from_json(const std::string& text) {
  const json j = json::parse(text);
  ClassWeights w;
  for (int c = 0; c < kNumClasses; ++c)
    w.w[c] = j.at("weights").at(std::string(to_string(static_cast<Maneuver>(c)))).get<double>();
  return w;
}

Maneuver apply_decision_rule(std::span<const double> p, const ThresholdSet& t) {
  if (p.size() != kNumClasses) throw Error(ErrorCode::InvalidSimplex, "probability vector needs three entries");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidSimplex, "negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error(ErrorCode::InvalidSimplex, "probabilities sum to " + csv::format_double(sum));
  int best = 0;
  double best_score = p[0] / t.tau[0];
  for (int c = 1; c < kNumClasses; ++c) {
    const double s = p[c] / t.tau[c];
    if (s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return static_cast<Maneuver>(best);
}

ThresholdSet calibrate_thresholds(std::span<const std::array<double, kNumClasses>> probs,
                                  std::span<const std::uint8_t> labels, double step) {
  if (probs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "probabilities and labels differ in length");
  const auto counts = class_counts(labels);
  for (int c = 0; c < kNumClasses; ++c)
    if (counts[c] == 0)
      throw Error(ErrorCode::DegenerateValidation,
                  "validation fold has no " + std::string(to_string(static_cast<Maneuver>(c))) + " rows");
  const int steps = static_cast<int>(std::lround(1.0 / step));
  std::vector<std::uint8_t> pred(labels.size());
  auto score = [&](const ThresholdSet& t) {
    for (std::size_t i = 0; i < probs.size(); ++i) pred[i] = static_cast<std::uint8_t>(apply_decision_rule(probs[i], t));
    return compute_metrics(pred, labels).macro_f1;
  };
  ThresholdSet best;
  double best_f1 = score(best);
  for (int a = steps; a >= 1; --a) {
    for (int b = steps; b >= 1; --b) {
      ThresholdSet t;
      t.tau[1] = a / static_cast<double>(steps);
      t.tau[2] = b / static_cast<double>(steps);
      const double f1 = score(t);
      if (f1 > best_f1) {
        best_f1 = f1;
        best = t;
      }
    }
  }
  return best;
}

ThresholdSet average_thresholds(std::span<const ThresholdSet> sets) {
  ThresholdSet out;
  if (sets.empty()) return out;
  for (int c = 0; c < kNumClasses; ++c) {
    double s = 0.0;
    for (const auto& t : sets) s += t.tau[c];
    out.tau[c] = s / static_cast<double>(sets.size());
  }
  return out;
}

std::string thresholds_to_json(const ThresholdSet& t) {
  json j;
  for (int c = 0; c < kNumClasses; ++c) j[std::string(to_string(static_cast<Maneuver>(c)))] = t.tau[c];
  return j.dump(2);
}

ThresholdSet thresholds_from_json(const std::string& text) {
  const json j = json::parse(text);
  ThresholdSet t;
  for (int c = 0; c < kNumClasses; ++c) {
    const double v = j.at(std::string(to_string(static_cast<Maneuver>(c)))).get<double>();
    if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold outside (0, 1]");
    t.tau[c] = v;
  }
  return t;
}

std::array<std::uint64_t, kNumClasses> class_counts(std::span<const std::uint8_t> labels) {
  std::array<std::uint64_t, kNumClasses> n{};
  for (auto l : labels) ++n[l];
  return n;
}

BalanceResult balance(const FeatureMatrix& data, const BalanceConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.rows;
  const std::size_t d = data.cols;
  BalanceResult res;
  res.before = class_counts(data.labels);

  // z-scoring parameters from the input rows.
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data.at(i, j);
  for (auto& m : mean) m /= std::max<double>(1.0, static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double x = data.at(i, j) - mean[j];
      scale[j] += x * x;
    }
  for (auto& s : scale) {
    const double sd = std::sqrt(s / std::max<double>(1.0, static_cast<double>(n)));
    s = sd > 0.0 ? 1.0 / sd : 0.0;
  }

  int major = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (cfg.target_ratio[c] > cfg.target_ratio[major]) major = c;

  FeatureMatrix out = data;
  if (out.refs.empty() && n > 0) out.refs.assign(n, SampleRef{});
  for (int c = 0; c < kNumClasses; ++c) {
    if (c == major) continue;
    const auto target = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(res.before[major]) * cfg.target_ratio[c] / cfg.target_ratio[major]));
    if (target <= res.before[c]) continue;
    std::vector<std::size_t> members;
    std::vector<double> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (data.labels[i] != c) continue;
      members.push_back(i);
      for (std::size_t j = 0; j < d; ++j) rows.push_back(data.at(i, j));
    }
    const auto syn = smote_oversample(rows, d, scale, cfg.smote_k, target - res.before[c],
                                      derive_seed(cfg.seed, "smote/" + std::string(to_string(static_cast<Maneuver>(c)))));
    for (std::size_t s = 0; s < syn.parents.size(); ++s) {
      const SampleRef ref{-1, -1, -1, -1};
      out.append_row(std::span<const double>(syn.rows.data() + s * d, d), static_cast<std::uint8_t>(c), &ref);
      res.parents.emplace_back(members[syn.parents[s].first], members[syn.parents[s].second]);
    }
    res.synthetic += syn.parents.size();
  }

  if (cfg.tomek && out.rows >= 2) {
    std::vector<double> z(out.rows * d);
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (out.at(i, j) - mean[j]) * scale[j];
    const auto removed = tomek_links(z, d, out.labels, static_cast<std::uint8_t>(major));
    res.tomek_removed = removed.size();
    if (!removed.empty()) {
      std::vector<char> gone(out.rows, 0);
      for (auto i : removed) gone[i] = 1;
      std::vector<std::size_t> keep;
      keep.reserve(out.rows - removed.size());
      for (std::size_t i = 0; i < out.rows; ++i)
        if (!gone[i]) keep.push_back(i);
      out = out.subset(keep);
    }
  }
  res.first_synthetic_row = out.rows - res.synthetic;
  res.after = class_counts(out.labels);
  res.weights = class_weights(res.after, cfg.alpha);
  res.data = std::move(out);
  return res;
}

}  // namespace lcp
