#include "lcp/gbdt/tree.hpp"

#include <algorithm>
#include <cmath>

namespace lcp::gbdt {

int Tree::num_leaves() const {
  int n = 0;
  for (const auto& node : nodes) n += node.is_leaf();
  return n;
}

int Tree::depth() const {
  int d = 0;
  for (const auto& node : nodes) d = std::max(d, node.depth);
  return d;
}

const TreeNode& Tree::leaf_for(std::span<const float> x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = static_cast<double>(x[static_cast<std::size_t>(n.feature)]) <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)];
}

double Tree::predict(std::span<const double> x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double Tree::predict_binned(const BinIndex& idx, std::size_t row) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = idx.bin(row, static_cast<std::size_t>(n.feature)) <= n.bin ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
  const double g = gl + gr;
  const double h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

double leaf_value(double g, double h, double lambda, double lower, double upper) {
  const double den = h + lambda;
  const double w = den > 0.0 ? -g / den : 0.0;
  return std::clamp(w, lower, upper);
}

namespace {

// Loss reduction credited to a leaf holding (g, h) whose output is confined to
// [lower, upper]. Unconfined it is g^2 / (2 (h + lambda)).
double leaf_score(double g, double h, double lambda, double lower, double upper) {
  const double den = h + lambda;
  if (!(den > 0.0)) return 0.0;
  const double w = -g / den;
  if (w >= lower && w <= upper) return 0.5 * g * g / den;
  const double c = std::clamp(w, lower, upper);
  return -(g * c + 0.5 * den * c * c);
}

}  // namespace

SplitCandidate find_best_split(const BinIndex& idx, const Histogram& hist, const NodeStats& node,
                               const TreeParams& params, std::span<const std::int8_t> monotone,
                               std::span<const char> feature_mask) {
  SplitCandidate best;
  const auto min_data = static_cast<std::uint32_t>(std::max(1, params.min_data_in_leaf));
  if (node.count < 2 * min_data) return best;
  const bool bounded = std::isfinite(node.lower) || std::isfinite(node.upper);
  const double parent_score = leaf_score(node.g, node.h, params.lambda, node.lower, node.upper);
  const double lambda = params.lambda;
  for (std::size_t f = 0; f < idx.cols(); ++f) {
    if (!feature_mask.empty() && !feature_mask[f]) continue;
    const int nb = idx.num_bins(f);
    if (nb < 2) continue;
    const int dir = monotone.empty() ? 0 : monotone[f];
    const auto bins = hist.feature(idx, f);
    double gl = 0.0, hl = 0.0;
    std::uint32_t nl = 0;
    for (int b = 0; b + 1 < nb; ++b) {
      gl += bins[static_cast<std::size_t>(b)].g;
      hl += bins[static_cast<std::size_t>(b)].h;
      nl += bins[static_cast<std::size_t>(b)].count;
      if (nl < min_data) continue;
      const std::uint32_t nr = node.count - nl;
      if (nr < min_data) break;
      const double gr = node.g - gl;
      const double hr = node.h - hl;
      if (!(hl + lambda > 0.0) || !(hr + lambda > 0.0)) continue;
      const double wl = leaf_value(gl, hl, lambda, node.lower, node.upper);
      const double wr = leaf_value(gr, hr, lambda, node.lower, node.upper);
      if (dir > 0 && wl > wr) continue;
      if (dir < 0 && wl < wr) continue;
      const double gain =
          bounded || dir != 0
              ? leaf_score(gl, hl, lambda, node.lower, node.upper) + leaf_score(gr, hr, lambda, node.lower, node.upper) -
                    parent_score - params.gamma
              : split_gain(gl, hl, gr, hr, lambda, params.gamma);
      if (gain > best.gain) {
        best.valid = true;
        best.feature = static_cast<int>(f);
        best.bin = b;
        best.gain = gain;
        best.left_g = gl;
        best.left_h = hl;
        best.left_count = nl;
        best.left_value = wl;
        best.right_value = wr;
      }
    }
  }
  return best;
}

namespace {

struct Leaf {
  int node = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  NodeStats stats;
  Histogram hist;
  SplitCandidate best;
};

}  // namespace

Tree grow_tree(const BinIndex& idx, std::span<const std::size_t> rows, std::span<const double> g,
               std::span<const double> h, const TreeParams& params, std::span<const std::int8_t> monotone,
               std::span<const char> feature_mask) {
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> scratch(order.size());

  Tree tree;
  NodeStats root;
  for (auto r : order) {
    root.g += g[r];
    root.h += h[r];
  }
  root.count = static_cast<std::uint32_t>(order.size());
  TreeNode root_node;
  root_node.value = leaf_value(root.g, root.h, params.lambda);
  root_node.count = root.count;
  tree.nodes.push_back(root_node);
  if (params.max_leaves <= 1 || order.empty()) return tree;

  const auto min_data = static_cast<std::uint32_t>(std::max(1, params.min_data_in_leaf));
  auto splittable = [&](const NodeStats& s, int depth) {
    if (params.max_depth > 0 && depth >= params.max_depth) return false;
    return s.count >= 2 * min_data;
  };

  std::vector<Leaf> leaves;
  {
    Leaf l;
    l.node = 0;
    l.begin = 0;
    l.end = order.size();
    l.stats = root;
    if (splittable(root, 0)) {
      build_histogram(idx, order, g, h, feature_mask, l.hist);
      l.best = find_best_split(idx, l.hist, l.stats, params, monotone, feature_mask);
    }
    leaves.push_back(std::move(l));
  }

  while (static_cast<int>(leaves.size()) < params.max_leaves) {
    int pick = -1;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto& c = leaves[i].best;
      if (!c.valid) continue;
      if (pick < 0 || c.gain > leaves[static_cast<std::size_t>(pick)].best.gain ||
          (c.gain == leaves[static_cast<std::size_t>(pick)].best.gain &&
           leaves[i].node < leaves[static_cast<std::size_t>(pick)].node))
        pick = static_cast<int>(i);
    }
    if (pick < 0) break;

    Leaf parent = std::move(leaves[static_cast<std::size_t>(pick)]);
    const SplitCandidate cand = parent.best;
    const auto f = static_cast<std::size_t>(cand.feature);

    // Stable partition of the parent's rows.
    std::size_t nl = 0, nr = 0;
    for (std::size_t i = parent.begin; i < parent.end; ++i) {
      const std::size_t r = order[i];
      if (idx.bin(r, f) <= cand.bin) order[parent.begin + nl++] = r;
      else scratch[nr++] = r;
    }
    std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(nr),
              order.begin() + static_cast<std::ptrdiff_t>(parent.begin + nl));

    NodeStats ls, rs;
    ls.g = cand.left_g;
    ls.h = cand.left_h;
    ls.count = static_cast<std::uint32_t>(nl);
    rs.g = parent.stats.g - cand.left_g;
    rs.h = parent.stats.h - cand.left_h;
    rs.count = static_cast<std::uint32_t>(nr);
    ls.lower = rs.lower = parent.stats.lower;
    ls.upper = rs.upper = parent.stats.upper;
    const int dir = monotone.empty() ? 0 : monotone[f];
    if (dir != 0) {
      const double mid = (cand.left_value + cand.right_value) / 2.0;
      if (dir > 0) {
        ls.upper = std::min(ls.upper, mid);
        rs.lower = std::max(rs.lower, mid);
      } else {
        ls.lower = std::max(ls.lower, mid);
        rs.upper = std::min(rs.upper, mid);
      }
    }

    const int pnode = parent.node;
    const int depth = tree.nodes[static_cast<std::size_t>(pnode)].depth + 1;
    const int lnode = static_cast<int>(tree.nodes.size());
    const int rnode = lnode + 1;
    {
      auto& pn = tree.nodes[static_cast<std::size_t>(pnode)];
      pn.feature = cand.feature;
      pn.bin = cand.bin;
      pn.threshold = idx.feature(f).upper[static_cast<std::size_t>(cand.bin)];
      pn.left = lnode;
      pn.right = rnode;
      pn.gain = cand.gain;
    }
    for (const auto* s : {&ls, &rs}) {
      TreeNode n;
      n.value = leaf_value(s->g, s->h, params.lambda, s->lower, s->upper);
      n.lower = s->lower;
      n.upper = s->upper;
      n.count = s->count;
      n.depth = depth;
      tree.nodes.push_back(n);
    }

    Leaf left, right;
    left.node = lnode;
    left.begin = parent.begin;
    left.end = parent.begin + nl;
    left.stats = ls;
    right.node = rnode;
    right.begin = parent.begin + nl;
    right.end = parent.end;
    right.stats = rs;

    const bool split_left = splittable(ls, depth);
    const bool split_right = splittable(rs, depth);
    if (split_left || split_right) {
      Leaf& small = nl <= nr ? left : right;
      Leaf& large = nl <= nr ? right : left;
      build_histogram(idx, std::span<const std::size_t>(order).subspan(small.begin, small.end - small.begin), g, h,
                      feature_mask, small.hist);
      subtract_histogram(parent.hist, small.hist, large.hist);
      if (split_left) left.best = find_best_split(idx, left.hist, left.stats, params, monotone, feature_mask);
      if (split_right) right.best = find_best_split(idx, right.hist, right.stats, params, monotone, feature_mask);
      if (!split_left) left.hist = {};
      if (!split_right) right.hist = {};
    }
    leaves[static_cast<std::size_t>(pick)] = std::move(left);
    leaves.push_back(std::move(right));
  }
  return tree;
}

}  // namespace lcp::gbdt
