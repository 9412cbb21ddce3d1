#include "lfu/tree.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace lfu {

BinnedMatrix::BinnedMatrix(const Eigen::Ref<const Matrix>& x, std::size_t max_bins) : rows_(x.rows()), cols_(x.cols()) {
  if (max_bins == 0 || max_bins > kMaxCodes) max_bins = kMaxCodes;
  codes_.resize(static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_));
  std::vector<double> sorted(static_cast<std::size_t>(rows_));
  for (Index j = 0; j < cols_; ++j) {
    for (Index i = 0; i < rows_; ++i) {
      const double v = x(i, j);
      if (!std::isfinite(v)) throw DataError("binning: non-finite value in feature " + std::to_string(j));
      sorted[static_cast<std::size_t>(i)] = v;
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct;
    std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(distinct));

    // Upper edge (inclusive) of every bin, each an observed value.
    std::vector<double> edges;
    if (distinct.size() <= max_bins) {
      edges = distinct;
    } else {
      for (std::size_t k = 1; k < max_bins; ++k) {
        const double q = sorted[k * sorted.size() / max_bins];
        if (edges.empty() || q > edges.back()) edges.push_back(q);
      }
      if (edges.empty() || edges.back() < distinct.back()) edges.push_back(distinct.back());
    }
    for (std::size_t b = 0; b < edges.size(); ++b) {
      double cut = std::numeric_limits<double>::infinity();
      if (b + 1 < edges.size()) {
        const double next = *std::upper_bound(distinct.begin(), distinct.end(), edges[b]);
        cut = 0.5 * (edges[b] + next);
        if (!(cut > edges[b])) cut = next;
      }
      cuts_.push_back(cut);
    }
    offsets_.push_back(offsets_.back() + edges.size());
    for (Index i = 0; i < rows_; ++i) {
      const auto bin = std::lower_bound(edges.begin(), edges.end(), x(i, j)) - edges.begin();
      codes_[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(j)] =
          static_cast<std::uint16_t>(bin);
    }
  }
}

double Tree::predict(const double* row, Index stride) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = row[static_cast<Index>(n.feature) * stride] < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

std::vector<int> Tree::split_features() const {
  std::vector<int> f;
  for (const auto& n : nodes)
    if (!n.leaf()) f.push_back(n.feature);
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

nlohmann::json node_json(const Tree& t, int i) {
  const auto& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.leaf()) return {{"leaf", n.value}, {"cover", n.cover}};
  return {{"feature", n.feature},   {"threshold", n.threshold}, {"gain", n.gain},
          {"cover", n.cover},       {"value", n.value},         {"left", node_json(t, n.left)},
          {"right", node_json(t, n.right)}};
}

int node_from_json(Tree& t, const nlohmann::json& j) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  TreeNode n;
  j.at("cover").get_to(n.cover);
  if (j.contains("leaf")) {
    j.at("leaf").get_to(n.value);
    t.nodes[static_cast<std::size_t>(id)] = n;
    return id;
  }
  j.at("feature").get_to(n.feature);
  j.at("threshold").get_to(n.threshold);
  j.at("gain").get_to(n.gain);
  j.at("value").get_to(n.value);
  n.left = node_from_json(t, j.at("left"));
  n.right = node_from_json(t, j.at("right"));
  t.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}

class Grower {
 public:
  Grower(const BinnedMatrix& x, std::span<const double> a, std::span<const double> b, std::span<const double> w,
         std::span<const int> features, const GrowOptions& opt)
      : x_(x), a_(a), b_(b), w_(w), features_(features), opt_(opt) {}

  Tree run(std::vector<std::uint32_t> rows) {
    rows_ = std::move(rows);
    scratch_.resize(rows_.size());
    tree_.nodes.emplace_back();
    std::vector<double> hist(2 * x_.total_bins(), 0.0);
    accumulate(hist, 0, rows_.size());
    grow(0, 0, rows_.size(), 0, hist);
    return std::move(tree_);
  }

 private:
  double leaf_value(double a, double b) const {
    const auto& c = opt_.criterion;
    if (c.kind == SplitCriterion::Kind::gini) return b > 0.0 ? a / b : 0.0;
    return c.leaf_scale * newton_leaf(a, b, c.l1, c.l2);
  }

  double score(double a, double b) const {
    const auto& c = opt_.criterion;
    if (c.kind == SplitCriterion::Kind::gini) return b > 0.0 ? -2.0 * a * (b - a) / b : 0.0;
    const double t = soft_threshold(a, c.l1);
    const double denom = b + c.l2;
    return denom > 0.0 ? t * t / denom : 0.0;
  }

  void accumulate(std::vector<double>& hist, std::size_t begin, std::size_t end) const {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      const std::uint16_t* code = x_.row(static_cast<Index>(r));
      const double wr = w_.empty() ? 1.0 : w_[r];
      const double ar = a_[r] * wr;
      const double br = b_[r] * wr;
      for (int f : features_) {
        const std::size_t k = 2 * (x_.offset(f) + code[f]);
        hist[k] += ar;
        hist[k + 1] += br;
      }
    }
  }

  void grow(int node, std::size_t begin, std::size_t end, int depth, std::vector<double>& hist) {
    ExactSum sa, sb;
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      if (w_.empty()) {
        sa.add(a_[r]);
        sb.add(b_[r]);
      } else {
        sa.add_product(a_[r], w_[r]);
        sb.add_product(b_[r], w_[r]);
      }
    }
    const double a = sa.value(), b = sb.value();
    {
      auto& n = tree_.nodes[static_cast<std::size_t>(node)];
      n.value = leaf_value(a, b);
      n.cover = b;
    }
    if (depth >= opt_.max_depth || end - begin < 2) return;

    const auto& c = opt_.criterion;
    const double parent = score(a, b);
    double best_gain = -std::numeric_limits<double>::infinity();
    int best_feature = -1;
    std::size_t best_bin = 0;
    for (int f : features_) {
      const std::size_t off = x_.offset(f);
      const std::size_t nb = x_.bins(f);
      if (nb < 2) continue;
      double fa = 0.0, fb = 0.0;
      for (std::size_t k = 0; k < nb; ++k) fa += hist[2 * (off + k)], fb += hist[2 * (off + k) + 1];
      double la = 0.0, lb = 0.0;
      for (std::size_t k = 0; k + 1 < nb; ++k) {
        la += hist[2 * (off + k)];
        lb += hist[2 * (off + k) + 1];
        const double ra = fa - la;
        const double rb = fb - lb;
        if (lb < c.min_child_b || rb < c.min_child_b) continue;
        if (lb <= 0.0 || rb <= 0.0) continue;
        double gain = score(la, lb) + score(ra, rb) - parent;
        if (c.kind == SplitCriterion::Kind::newton) gain *= 0.5;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_bin = k;
        }
      }
    }
    if (best_feature < 0 || !(best_gain > c.min_split_gain)) return;

    // Stable partition of [begin, end) by the chosen bin.
    std::size_t nl = 0;
    std::size_t nr = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows_[i];
      if (x_.row(static_cast<Index>(r))[best_feature] <= best_bin) rows_[begin + nl++] = r;
      else scratch_[nr++] = r;
    }
    std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(nr),
              rows_.begin() + static_cast<std::ptrdiff_t>(begin + nl));
    const std::size_t mid = begin + nl;

    const int left = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.emplace_back();
    auto& n = tree_.nodes[static_cast<std::size_t>(node)];
    n.feature = best_feature;
    n.threshold = x_.threshold(best_feature, best_bin);
    n.left = left;
    n.right = left + 1;
    n.gain = best_gain;

    // Histogram of the smaller child; the sibling is parent minus it.
    std::vector<double> small(hist.size(), 0.0);
    const bool left_small = nl <= nr;
    if (left_small) accumulate(small, begin, mid);
    else accumulate(small, mid, end);
    for (int f : features_) {
      const std::size_t lo = 2 * x_.offset(f);
      const std::size_t hi = 2 * (x_.offset(f) + x_.bins(f));
      for (std::size_t k = lo; k < hi; ++k) hist[k] -= small[k];
    }
    std::vector<double>& left_hist = left_small ? small : hist;
    std::vector<double>& right_hist = left_small ? hist : small;
    grow(left, begin, mid, depth + 1, left_hist);
    grow(left + 1, mid, end, depth + 1, right_hist);
  }

  const BinnedMatrix& x_;
  std::span<const double> a_;
  std::span<const double> b_;
  std::span<const double> w_;
  std::span<const int> features_;
  const GrowOptions& opt_;
  std::vector<std::uint32_t> rows_;
  std::vector<std::uint32_t> scratch_;
  Tree tree_;
};

}  // namespace

nlohmann::json to_json(const Tree& tree) { return tree.nodes.empty() ? nlohmann::json() : node_json(tree, 0); }

Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  if (!j.is_null()) node_from_json(t, j);
  return t;
}

double soft_threshold(double g, double alpha) {
  if (alpha <= 0.0) return g;
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

double newton_leaf(double g, double h, double l1, double l2) {
  const double denom = h + l2;
  if (!(denom > 0.0)) return 0.0;
  return -soft_threshold(g, l1) / denom;
}

Tree grow_tree(const BinnedMatrix& x, std::span<const double> a, std::span<const double> b,
               std::vector<std::uint32_t> rows, std::span<const int> features, const GrowOptions& options,
               std::span<const double> weights) {
  Grower g(x, a, b, weights, features, options);
  return g.run(std::move(rows));
}

}  // namespace lfu
