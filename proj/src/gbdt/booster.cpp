#include "lcp/gbdt/booster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "lcp/error.hpp"
#include "lcp/io.hpp"
#include "lcp/random.hpp"

namespace lcp::gbdt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Monotone constraints
// ---------------------------------------------------------------------------

bool MonotoneSpec::empty() const {
  for (const auto& d : directions)
    for (const auto& [name, dir] : d)
      if (dir != 0) return false;
  return true;
}

std::array<std::vector<std::int8_t>, kNumClasses> MonotoneSpec::resolve(const std::vector<std::string>& names) const {
  std::array<std::vector<std::int8_t>, kNumClasses> out;
  for (int c = 0; c < kNumClasses; ++c) {
    out[c].assign(names.size(), 0);
    for (const auto& [name, dir] : directions[c]) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end())
        throw Error(ErrorCode::UnknownFeature, "monotone constraint on unknown feature '" + name + "'", {name});
      out[c][static_cast<std::size_t>(it - names.begin())] = static_cast<std::int8_t>(dir > 0 ? 1 : dir < 0 ? -1 : 0);
    }
  }
  return out;
}

MonotoneSpec monotone_from_manifest(const FeatureManifest& manifest) {
  MonotoneSpec m;
  for (const auto& f : manifest.features)
    for (int c = 0; c < kNumClasses; ++c)
      if (f.monotone_hint[c] != 0) m.directions[c][f.name] = f.monotone_hint[c];
  return m;
}

namespace {

json monotone_json(const MonotoneSpec& m) {
  json j = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    json cj = json::object();
    for (const auto& [name, dir] : m.directions[c]) cj[name] = dir;
    j[std::string(to_string(static_cast<Maneuver>(c)))] = cj;
  }
  return j;
}

MonotoneSpec monotone_from(const json& j) {
  MonotoneSpec m;
  for (auto& [key, val] : j.items()) {
    const int c = static_cast<int>(parse_maneuver(key));
    for (auto& [name, dir] : val.items()) {
      const int d = dir.get<int>();
      if (d < -1 || d > 1) throw Error(ErrorCode::InvalidConfig, "monotone direction must be -1, 0 or 1");
      m.directions[c][name] = d;
    }
  }
  return m;
}

}  // namespace

std::string monotone_to_json(const MonotoneSpec& m) { return monotone_json(m).dump(2); }
MonotoneSpec monotone_from_json(const std::string& text) { return monotone_from(json::parse(text)); }

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

void TrainParams::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidParams, what); };
  if (num_rounds < 0) bad("num_rounds must be non-negative");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) bad("learning_rate must lie in (0, 1]");
  if (!(lambda >= 0.0)) bad("lambda must be non-negative");
  if (!(gamma >= 0.0)) bad("gamma must be non-negative");
  if (max_leaves < 2) bad("max_leaves must be at least 2");
  if (min_data_in_leaf < 1) bad("min_data_in_leaf must be at least 1");
  if (max_bins < 2 || max_bins > 65536) bad("max_bins must lie in [2, 65536]");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) bad("feature_fraction must lie in (0, 1]");
  if (goss) {
    if (!(goss->a > 0.0 && goss->a <= 1.0)) bad("goss a must lie in (0, 1]");
    if (!(goss->b >= 0.0 && goss->a + goss->b <= 1.0 + 1e-12)) bad("goss needs 0 <= b <= 1 - a");
  }
  for (double w : class_weights.w)
    if (!(w > 0.0) || !std::isfinite(w)) bad("class weights must be finite and positive");
}

TreeParams TrainParams::tree_params() const {
  TreeParams t;
  t.max_leaves = max_leaves;
  t.max_depth = max_depth;
  t.min_data_in_leaf = min_data_in_leaf;
  t.lambda = lambda;
  t.gamma = gamma;
  return t;
}

TrainParams train_params_from_json(const std::string& text, TrainParams p) {
  const json j = json::parse(text);
  static const std::set<std::string> known = {"num_rounds", "learning_rate",   "lambda",        "gamma",
                                              "max_leaves", "max_depth",       "min_data_in_leaf", "max_bins",
                                              "feature_fraction", "goss",      "seed",          "class_weights",
                                              "monotone"};
  for (auto& [key, val] : j.items())
    if (!known.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown training parameter '" + key + "'", {key});
  if (j.contains("num_rounds")) p.num_rounds = j["num_rounds"].get<int>();
  if (j.contains("learning_rate")) p.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("lambda")) p.lambda = j["lambda"].get<double>();
  if (j.contains("gamma")) p.gamma = j["gamma"].get<double>();
  if (j.contains("max_leaves")) p.max_leaves = j["max_leaves"].get<int>();
  if (j.contains("max_depth")) p.max_depth = j["max_depth"].get<int>();
  if (j.contains("min_data_in_leaf")) p.min_data_in_leaf = j["min_data_in_leaf"].get<int>();
  if (j.contains("max_bins")) p.max_bins = j["max_bins"].get<int>();
  if (j.contains("feature_fraction")) p.feature_fraction = j["feature_fraction"].get<double>();
  if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("goss")) {
    if (j["goss"].is_null()) p.goss.reset();
    else p.goss = GossParams{j["goss"].at("a").get<double>(), j["goss"].at("b").get<double>()};
  }
  if (j.contains("class_weights"))
    for (int c = 0; c < kNumClasses; ++c)
      p.class_weights.w[c] = j["class_weights"].at(std::string(to_string(static_cast<Maneuver>(c)))).get<double>();
  if (j.contains("monotone")) p.monotone = monotone_from(j["monotone"]);
  return p;
}

namespace {

json params_json(const TrainParams& p) {
  json j;
  j["num_rounds"] = p.num_rounds;
  j["learning_rate"] = p.learning_rate;
  j["lambda"] = p.lambda;
  j["gamma"] = p.gamma;
  j["max_leaves"] = p.max_leaves;
  j["max_depth"] = p.max_depth;
  j["min_data_in_leaf"] = p.min_data_in_leaf;
  j["max_bins"] = p.max_bins;
  j["feature_fraction"] = p.feature_fraction;
  j["seed"] = p.seed;
  j["goss"] = p.goss ? json{{"a", p.goss->a}, {"b", p.goss->b}} : json(nullptr);
  for (int c = 0; c < kNumClasses; ++c)
    j["class_weights"][std::string(to_string(static_cast<Maneuver>(c)))] = p.class_weights.w[c];
  j["monotone"] = monotone_json(p.monotone);
  return j;
}

}  // namespace

std::string train_params_to_json(const TrainParams& p) { return params_json(p).dump(2); }

// ---------------------------------------------------------------------------
// GOSS
// ---------------------------------------------------------------------------

GossSample goss_sample(std::span<const double> grad_norm, double a, double b, std::uint64_t seed) {
  const std::size_t n = grad_norm.size();
  GossSample s;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return grad_norm[x] > grad_norm[y]; });
  const auto top = std::min(n, static_cast<std::size_t>(std::ceil(a * static_cast<double>(n) - 1e-9)));
  std::vector<std::pair<std::size_t, double>> picked;
  for (std::size_t i = 0; i < top; ++i) picked.emplace_back(order[i], 1.0);
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(top), order.end());
  std::sort(rest.begin(), rest.end());
  if (b > 0.0 && !rest.empty()) {
    const auto want = std::min(rest.size(), static_cast<std::size_t>(std::ceil(b * static_cast<double>(n) - 1e-9)));
    const double mult = (1.0 - a) / b;
    Rng rng(seed);
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(rest.size() - i));
      std::swap(rest[i], rest[j]);
      picked.emplace_back(rest[i], mult);
    }
  }
  std::sort(picked.begin(), picked.end());
  for (const auto& [r, m] : picked) {
    s.rows.push_back(r);
    s.multiplier.push_back(m);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Training and prediction
// ---------------------------------------------------------------------------

std::array<double, kNumClasses> Ensemble::raw_scores(std::span<const float> x) const {
  std::array<double, kNumClasses> z = base_scores;
  for (std::size_t t = 0; t < trees.size(); ++t) z[t % kNumClasses] += learning_rate * trees[t].predict(x);
  return z;
}

Probs Ensemble::predict_probs(std::span<const float> x) const {
  const auto z = raw_scores(x);
  return softmax_probs(z);
}

Ensemble train(const FeatureMatrix& data, const TrainParams& params) {
  params.validate();
  const std::size_t n = data.rows;
  const std::size_t d = data.cols;
  if (data.labels.size() != n) throw Error(ErrorCode::LengthMismatch, "one label per row required");
  const auto counts = class_counts(data.labels);
  for (int c = 0; c < kNumClasses; ++c)
    if (counts[c] == 0)
      throw Error(ErrorCode::EmptyClassInTraining,
                  "training data has no " + std::string(to_string(static_cast<Maneuver>(c))) + " rows");

  Ensemble model;
  model.learning_rate = params.learning_rate;
  model.manifest_hash = data.manifest_hash;
  model.feature_names = data.names;
  if (model.feature_names.size() != d) {
    model.feature_names.clear();
    for (std::size_t f = 0; f < d; ++f) model.feature_names.push_back("f" + std::to_string(f));
  }
  model.monotone = params.monotone;
  model.params = params;
  const auto mono = params.monotone.resolve(model.feature_names);

  const BinIndex idx = BinIndex::build(data.values, n, d, params.max_bins);

  std::vector<double> weight(n);
  std::array<double, kNumClasses> wsum{};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = params.class_weights.w[data.labels[i]];
    wsum[data.labels[i]] += weight[i];
    total += weight[i];
  }
  for (int c = 0; c < kNumClasses; ++c) model.base_scores[c] = std::log(wsum[c] / total);

  std::vector<double> z(n * kNumClasses);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < kNumClasses; ++c) z[i * kNumClasses + c] = model.base_scores[c];
  std::vector<Probs> probs(n);
  auto refresh = [&] {
    const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < nn; ++i)
      probs[static_cast<std::size_t>(i)] =
          softmax_probs(std::span<const double>(z.data() + static_cast<std::size_t>(i) * kNumClasses, kNumClasses));
    model.train_loss.push_back(weighted_log_loss(data.labels, probs, weight));
  };
  refresh();

  const TreeParams tp = params.tree_params();
  Rng feature_rng(derive_seed(params.seed, "feature_fraction"));
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::vector<double> gc(n), hc(n);
  const auto use_features = static_cast<std::size_t>(std::ceil(params.feature_fraction * static_cast<double>(d) - 1e-9));

  for (int round = 0; round < params.num_rounds; ++round) {
    const GradHess gh = grad_hess(data.labels, probs, weight);
    std::vector<std::size_t> rows = all_rows;
    std::vector<double> mult;
    if (params.goss && params.goss->a < 1.0) {
      std::vector<double> norm(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < kNumClasses; ++c) norm[i] += std::abs(gh.grad(i, c));
      auto s = goss_sample(norm, params.goss->a, params.goss->b,
                           derive_seed(params.seed, "goss/" + std::to_string(round)));
      rows = std::move(s.rows);
      mult = std::move(s.multiplier);
    }
    for (int c = 0; c < kNumClasses; ++c) {
      if (mult.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
          gc[i] = gh.grad(i, c);
          hc[i] = gh.hess(i, c);
        }
      } else {
        for (std::size_t k = 0; k < rows.size(); ++k) {
          gc[rows[k]] = gh.grad(rows[k], c) * mult[k];
          hc[rows[k]] = gh.hess(rows[k], c) * mult[k];
        }
      }
      std::vector<char> mask;
      if (use_features < d) {
        std::vector<std::size_t> perm(d);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = 0; i < use_features; ++i)
          std::swap(perm[i], perm[i + static_cast<std::size_t>(feature_rng.below(d - i))]);
        mask.assign(d, 0);
        for (std::size_t i = 0; i < use_features; ++i) mask[perm[i]] = 1;
      }
      Tree tree = grow_tree(idx, rows, gc, hc, tp, mono[c], mask);
      const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < nn; ++i)
        z[static_cast<std::size_t>(i) * kNumClasses + static_cast<std::size_t>(c)] +=
            params.learning_rate * tree.predict_binned(idx, static_cast<std::size_t>(i));
      model.trees.push_back(std::move(tree));
    }
    refresh();
  }
  return model;
}

std::vector<Probs> predict_matrix(const Ensemble& model, const FeatureMatrix& data) {
  if (data.cols != model.num_features())
    throw Error(ErrorCode::ManifestMismatch,
                "model expects " + std::to_string(model.num_features()) + " features, input has " +
                    std::to_string(data.cols),
                {std::to_string(model.num_features()), std::to_string(data.cols)});
  if (data.manifest_hash != 0 && model.manifest_hash != 0 && data.manifest_hash != model.manifest_hash)
    throw Error(ErrorCode::ManifestMismatch, "feature manifest hash differs from the model's");
  std::vector<Probs> out(data.rows);
  const auto nn = static_cast<std::ptrdiff_t>(data.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < nn; ++i)
    out[static_cast<std::size_t>(i)] = model.predict_probs(data.row(static_cast<std::size_t>(i)));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

json bound_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double bound_from(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

}  // namespace

std::string model_to_json(const Ensemble& m) {
  json j;
  j["format"] = "lcpredict-gbdt";
  j["version"] = 1;
  j["num_class"] = m.num_class;
  j["learning_rate"] = m.learning_rate;
  j["base_scores"] = m.base_scores;
  j["manifest_hash"] = hex64(m.manifest_hash);
  j["feature_names"] = m.feature_names;
  j["monotone"] = monotone_json(m.monotone);
  j["params"] = params_json(m.params);
  j["train_loss"] = m.train_loss;
  json trees = json::array();
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    json nodes = json::array();
    for (const auto& n : m.trees[t].nodes) {
      nodes.push_back({{"feature", n.feature},
                       {"bin", n.bin},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"value", n.value},
                       {"lower", bound_json(n.lower)},
                       {"upper", bound_json(n.upper)},
                       {"gain", n.gain},
                       {"count", n.count},
                       {"depth", n.depth}});
    }
    trees.push_back({{"round", t / kNumClasses}, {"class", t % kNumClasses}, {"nodes", nodes}});
  }
  j["trees"] = trees;
  return j.dump(1);
}

Ensemble model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("model file is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "lcpredict-gbdt") throw Error(ErrorCode::IoError, "not a model file");
  Ensemble m;
  m.num_class = j.at("num_class").get<int>();
  if (m.num_class != kNumClasses) throw Error(ErrorCode::IoError, "model is not a three-class ensemble");
  m.learning_rate = j.at("learning_rate").get<double>();
  m.base_scores = j.at("base_scores").get<std::array<double, kNumClasses>>();
  m.manifest_hash = std::stoull(j.at("manifest_hash").get<std::string>(), nullptr, 16);
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.monotone = monotone_from(j.at("monotone"));
  m.params = train_params_from_json(j.at("params").dump());
  m.train_loss = j.at("train_loss").get<std::vector<double>>();
  for (const auto& tj : j.at("trees")) {
    Tree t;
    for (const auto& nj : tj.at("nodes")) {
      TreeNode n;
      n.feature = nj.at("feature").get<int>();
      n.bin = nj.at("bin").get<int>();
      n.threshold = nj.at("threshold").get<double>();
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
      n.value = nj.at("value").get<double>();
      n.lower = bound_from(nj.at("lower"), -kInf);
      n.upper = bound_from(nj.at("upper"), kInf);
      n.gain = nj.at("gain").get<double>();
      n.count = nj.at("count").get<std::uint32_t>();
      n.depth = nj.at("depth").get<int>();
      t.nodes.push_back(n);
    }
    if (t.nodes.empty()) throw Error(ErrorCode::IoError, "model holds an empty tree");
    m.trees.push_back(std::move(t));
  }
  return m;
}

void save_model(const Ensemble& m, const std::filesystem::path& path) { write_text_file(path, model_to_json(m) + "\n"); }

Ensemble load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

}  // namespace lcp::gbdt
