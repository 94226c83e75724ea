#include <gtest/gtest.h>

#include <cmath>

#include "lcp/imbalance.hpp"
#include "support.hpp"

using namespace lcp;
using namespace lcp::test;

namespace {

// Independent macro F1 for the calibration oracle.
double oracle_macro_f1(const std::vector<int>& pred, const std::vector<std::uint8_t>& truth) {
  double sum = 0;
  for (int c = 0; c < 3; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && truth[i] == c) ++tp;
      if (pred[i] == c && truth[i] != c) ++fp;
      if (pred[i] != c && truth[i] == c) ++fn;
    }
    sum += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return sum / 3;
}

FeatureMatrix gaussian_blobs(std::array<int, 3> n, std::size_t dim, std::uint64_t seed) {
  FeatureMatrix m;
  m.cols = dim;
  Rng rng(seed);
  std::vector<double> row(dim);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n[c]; ++i) {
      for (std::size_t j = 0; j < dim; ++j) row[j] = rng.normal() + (j == 0 ? 1.5 * c : 0.0) + 10.0 * static_cast<double>(j);
      m.append_row(row, static_cast<std::uint8_t>(c), nullptr);
    }
  return m;
}

}  // namespace

TEST(Smote, MidpointAndEndpoints) {
  // two rows, k = 1: each row's only neighbor is the other
  const std::vector<double> rows{0, 0, 1, 1};
  const auto r = smote_oversample(rows, 2, {}, 1, 200, 3);
  ASSERT_EQ(r.parents.size(), 200u);
  for (std::size_t s = 0; s < r.parents.size(); ++s) {
    const auto [b, nb] = r.parents[s];
    const double u = r.u[s];
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    for (int j = 0; j < 2; ++j) {
      const double x = rows[b * 2 + j], y = rows[nb * 2 + j];
      EXPECT_DOUBLE_EQ(r.rows[s * 2 + j], x + u * (y - x));
    }
  }
  // interpolation at u = 0.5, 0, 1
  auto interp = [](double x, double y, double u) { return x + u * (y - x); };
  EXPECT_EQ(interp(0, 1, 0.5), 0.5);
  EXPECT_EQ(interp(0, 1, 0.0), 0.0);
  EXPECT_EQ(interp(0, 1, 1.0), 1.0);
}

TEST(Smote, TooFewMinoritySamples) {
  const std::vector<double> rows{0, 1, 2};
  EXPECT_LCP_ERROR(smote_oversample(rows, 1, {}, 5, 10, 1), ErrorCode::TooFewMinoritySamples);
}

TEST(Smote, NeighborIsAmongKNearest) {
  Rng rng(21);
  const std::size_t m = 40, d = 3;
  std::vector<double> rows(m * d);
  for (auto& v : rows) v = rng.uniform(-5, 5);
  const int k = 4;
  const auto r = smote_oversample(rows, d, {}, k, 300, 8);
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += (rows[a * d + j] - rows[b * d + j]) * (rows[a * d + j] - rows[b * d + j]);
    return s;
  };
  for (const auto& [b, nb] : r.parents) {
    ASSERT_NE(b, nb);
    // brute force: fewer than k other rows are strictly closer than the chosen one
    int closer = 0;
    for (std::size_t o = 0; o < m; ++o)
      if (o != b && dist(b, o) < dist(b, nb)) ++closer;
    EXPECT_LT(closer, k);
  }
}

TEST(Smote, DeterministicUnderSeed) {
  const std::vector<double> rows{0, 0, 1, 0, 0, 1, 1, 1, 2, 2};
  const auto a = smote_oversample(rows, 2, {}, 2, 50, 99);
  const auto b = smote_oversample(rows, 2, {}, 2, 50, 99);
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.parents, b.parents);
  const auto c = smote_oversample(rows, 2, {}, 2, 50, 100);
  EXPECT_NE(a.rows, c.rows);
}

TEST(Tomek, Examples) {
  // mutual pair with different labels: the NLC member goes
  const std::vector<double> two{0, 1};
  const std::vector<std::uint8_t> l2{0, 1};
  EXPECT_EQ(tomek_links(two, 1, l2, 0), std::vector<std::size_t>{0});
  // same label: nothing
  const std::vector<std::uint8_t> same{0, 0};
  EXPECT_TRUE(tomek_links(two, 1, same, 0).empty());
  // A(NLC)=0 nearest B(LLC)=1, but B nearest C=1.5: no link
  const std::vector<double> abc{0, 1, 1.5};
  const std::vector<std::uint8_t> l3{0, 1, 1};
  EXPECT_TRUE(tomek_links(abc, 1, l3, 0).empty());
  // minority-minority links drop nothing
  const std::vector<std::uint8_t> mm{1, 2};
  EXPECT_TRUE(tomek_links(two, 1, mm, 0).empty());
}

TEST(Tomek, NeverRemovesMinorityRows) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 300;
    std::vector<double> rows(n * 2);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      rows[2 * i] = rng.uniform(0, 10);
      rows[2 * i + 1] = rng.uniform(0, 10);
      labels[i] = static_cast<std::uint8_t>(rng.below(10) < 8 ? 0 : 1 + rng.below(2));
    }
    for (auto i : tomek_links(rows, 2, labels, 0)) EXPECT_EQ(labels[i], 0);
  }
}

TEST(Tomek, MatchesBruteForce) {
  Rng rng(6);
  const std::size_t n = 200;
  std::vector<double> rows(n * 2);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[2 * i] = rng.uniform(0, 10);
    rows[2 * i + 1] = rng.uniform(0, 10);
    labels[i] = static_cast<std::uint8_t>(rng.below(3));
  }
  auto nearest = [&](std::size_t a) {
    std::size_t best = a == 0 ? 1 : 0;
    auto d = [&](std::size_t b) { return std::hypot(rows[2 * a] - rows[2 * b], rows[2 * a + 1] - rows[2 * b + 1]); };
    for (std::size_t b = 0; b < n; ++b)
      if (b != a && d(b) < d(best)) best = b;
    return best;
  };
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0) continue;
    const auto j = nearest(i);
    if (labels[j] != 0 && nearest(j) == i) expect.push_back(i);
  }
  EXPECT_EQ(tomek_links(rows, 2, labels, 0), expect);
}

TEST(ClassWeights, ReferenceValues) {
  const auto w = class_weights({3000, 50, 50}, 0.5);
  // oracle: N / (K n_i) raised to alpha via exp/log
  const double n = 3100.0;
  const double o0 = std::exp(0.5 * std::log(n / (3 * 3000.0)));
  const double o1 = std::exp(0.5 * std::log(n / (3 * 50.0)));
  EXPECT_NEAR(w.w[0], o0, 1e-12);
  EXPECT_NEAR(w.w[1], o1, 1e-12);
  EXPECT_NEAR(w.w[2], o1, 1e-12);
  EXPECT_NEAR(w.w[0], 0.5869, 1e-4);
  EXPECT_NEAR(w.w[1], 4.546, 1e-3);
}

TEST(ClassWeights, IdentityCasesAndScaleInvariance) {
  const auto z = class_weights({3000, 50, 7}, 0.0);
  for (double v : z.w) EXPECT_EQ(v, 1.0);
  for (double a : {0.1, 0.5, 1.0}) {
    const auto b = class_weights({100, 100, 100}, a);
    for (double v : b.w) EXPECT_NEAR(v, 1.0, 1e-15);
  }
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const std::array<std::uint64_t, 3> n{1 + rng.below(10000), 1 + rng.below(500), 1 + rng.below(500)};
    const double a = rng.uniform();
    const auto w1 = class_weights(n, a);
    const auto w2 = class_weights({2 * n[0], 2 * n[1], 2 * n[2]}, a);
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(w1.w[c], w2.w[c], 1e-12 * w1.w[c]);
      EXPECT_GT(w1.w[c], 0.0);
    }
  }
  EXPECT_LCP_ERROR(class_weights({10, 0, 3}, 0.5), ErrorCode::EmptyClass);
}

TEST(DecisionRule, Examples) {
  const std::array<double, 3> p{0.6, 0.3, 0.1};
  EXPECT_EQ(apply_decision_rule(p, ThresholdSet{{1.0, 0.4, 0.4}}), Maneuver::LLC);
  EXPECT_EQ(apply_decision_rule(p, ThresholdSet{}), Maneuver::NLC);
  const std::array<double, 3> tie{0.5, 0.5, 0.0};
  EXPECT_EQ(apply_decision_rule(tie, ThresholdSet{}), Maneuver::NLC);
  const std::array<double, 3> bad{0.5, 0.2, 0.2};
  EXPECT_LCP_ERROR(apply_decision_rule(bad, ThresholdSet{}), ErrorCode::InvalidSimplex);
}

TEST(DecisionRule, UnitThresholdsEqualArgmax) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    std::array<double, 3> p{rng.uniform(), rng.uniform(), rng.uniform()};
    const double s = p[0] + p[1] + p[2];
    for (auto& v : p) v /= s;
    int am = 0;
    for (int c = 1; c < 3; ++c)
      if (p[c] > p[am]) am = c;
    EXPECT_EQ(static_cast<int>(apply_decision_rule(p, ThresholdSet{})), am);
  }
}

TEST(Calibration, ArgmaxAlreadyOptimal) {
  std::vector<std::array<double, 3>> p{{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}, {0.7, 0.2, 0.1}};
  std::vector<std::uint8_t> y{0, 1, 2, 0};
  const auto t = calibrate_thresholds(p, y);
  EXPECT_EQ(t.tau, (std::array<double, 3>{1, 1, 1}));
}

TEST(Calibration, LowersLlcThresholdToFlipUnderconfidentRows) {
  std::vector<std::array<double, 3>> p;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 20; ++i) {
    p.push_back({0.8, 0.1, 0.1});
    y.push_back(0);
  }
  for (int i = 0; i < 5; ++i) {
    p.push_back({0.5, 0.4, 0.1});
    y.push_back(1);
  }
  for (int i = 0; i < 5; ++i) {
    p.push_back({0.1, 0.1, 0.8});
    y.push_back(2);
  }
  // oracle: enumerate the grid, keep the first best in descending (LLC, RLC) order
  double best = -1;
  std::array<double, 3> want{1, 1, 1};
  {
    std::vector<int> pred(p.size());
    auto eval = [&](double a, double b) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double s[3] = {p[i][0], p[i][1] / a, p[i][2] / b};
        int c = 0;
        if (s[1] > s[c]) c = 1;
        if (s[2] > s[c]) c = 2;
        pred[i] = c;
      }
      return oracle_macro_f1(pred, y);
    };
    best = eval(1, 1);
    for (int a = 20; a >= 1; --a)
      for (int b = 20; b >= 1; --b) {
        const double f = eval(a / 20.0, b / 20.0);
        if (f > best) {
          best = f;
          want = {1, a / 20.0, b / 20.0};
        }
      }
  }
  const auto t = calibrate_thresholds(p, y);
  EXPECT_NEAR(t.tau[1], want[1], 1e-12);
  EXPECT_NEAR(t.tau[2], want[2], 1e-12);
  EXPECT_LT(t.tau[1], 0.4 / 0.5);  // flip condition of the rule
  EXPECT_NEAR(t.tau[1], 0.75, 1e-12);
  EXPECT_EQ(t.tau[0], 1.0);
}

TEST(Calibration, DegenerateValidation) {
  std::vector<std::array<double, 3>> p{{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}};
  std::vector<std::uint8_t> y{0, 1};
  EXPECT_LCP_ERROR(calibrate_thresholds(p, y), ErrorCode::DegenerateValidation);
}

TEST(Thresholds, JsonRoundTripAndAverage) {
  const ThresholdSet t{{1.0, 0.35, 0.6}};
  EXPECT_EQ(thresholds_from_json(thresholds_to_json(t)).tau, t.tau);
  const std::vector<ThresholdSet> s{ThresholdSet{{1, 0.2, 0.4}}, ThresholdSet{{1, 0.4, 0.8}}};
  const auto a = average_thresholds(s);
  EXPECT_NEAR(a.tau[1], 0.3, 1e-12);
  EXPECT_NEAR(a.tau[2], 0.6, 1e-12);
}

TEST(Balance, RatioFrom250To29) {
  const auto data = gaussian_blobs({2500, 10, 10}, 4, 1);
  BalanceConfig cfg;
  cfg.tomek = false;
  const auto r = balance(data, cfg);
  EXPECT_EQ(r.after[0], 2500u);
  EXPECT_NEAR(static_cast<double>(r.after[0]) / static_cast<double>(r.after[1]), 29.0, 1.0);
  EXPECT_NEAR(static_cast<double>(r.after[0]) / static_cast<double>(r.after[2]), 29.0, 1.0);
  EXPECT_EQ(r.first_synthetic_row, 2520u);
  EXPECT_EQ(r.synthetic, r.data.rows - 2520u);
}

TEST(Balance, SyntheticRowsCollinearWithParents) {
  const auto data = gaussian_blobs({900, 12, 12}, 5, 2);
  BalanceConfig cfg;
  cfg.tomek = false;
  const auto r = balance(data, cfg);
  ASSERT_EQ(r.parents.size(), r.synthetic);
  for (std::size_t s = 0; s < r.synthetic; ++s) {
    const auto [a, b] = r.parents[s];
    const auto row = r.data.row(r.first_synthetic_row + s);
    EXPECT_EQ(r.data.labels[r.first_synthetic_row + s], data.labels[a]);
    EXPECT_EQ(data.labels[a], data.labels[b]);
    // one u for all coordinates
    std::optional<double> u;
    for (std::size_t j = 0; j < data.cols; ++j) {
      const double x = data.at(a, j), y = data.at(b, j), v = row[j];
      const double tol = 1e-5 * (1 + std::abs(x) + std::abs(y));
      EXPECT_GE(v, std::min(x, y) - tol);
      EXPECT_LE(v, std::max(x, y) + tol);
      if (std::abs(y - x) > 0.5) {
        const double uj = (v - x) / (y - x);
        if (u) EXPECT_NEAR(uj, *u, 1e-4);
        else u = uj;
      }
    }
  }
}

TEST(Balance, TomekDropsOnlyMajorityAndIsDeterministic) {
  const auto data = gaussian_blobs({1500, 40, 40}, 3, 3);
  BalanceConfig cfg;
  const auto r1 = balance(data, cfg);
  const auto r2 = balance(data, cfg);
  EXPECT_EQ(r1.data.values, r2.data.values);
  EXPECT_EQ(r1.data.labels, r2.data.labels);
  EXPECT_GT(r1.tomek_removed, 0u);
  EXPECT_EQ(r1.after[0] + r1.tomek_removed, r1.before[0]);
  EXPECT_EQ(r1.after[1], r1.before[1] + static_cast<std::uint64_t>(std::count(r1.data.labels.begin() + static_cast<std::ptrdiff_t>(r1.first_synthetic_row), r1.data.labels.end(), 1)));
  const auto w = class_weights(r1.after, cfg.alpha);
  EXPECT_EQ(r1.weights.w, w.w);
}

TEST(Balance, RatioParsing) {
  EXPECT_EQ(parse_ratio("29:1:1"), (std::array<double, 3>{29, 1, 1}));
  EXPECT_LCP_ERROR(parse_ratio("29:1"), ErrorCode::InvalidConfig);
  EXPECT_LCP_ERROR(parse_ratio("29:0:1"), ErrorCode::InvalidConfig);
  BalanceConfig c;
  c.smote_k = 0;
  EXPECT_LCP_ERROR(c.validate(), ErrorCode::InvalidConfig);
}
