#pragma once

#include "lfu/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>

namespace lfu {

/// Column-wise discretisation of a dense matrix. With max_bins == 0 every
/// distinct value is its own bin, so a split search over bins is an exact
/// greedy search over all cut points. Codes are stored row-major.
class BinnedMatrix {
 public:
  static constexpr std::size_t kMaxCodes = 65535;

  BinnedMatrix() = default;
  BinnedMatrix(const Eigen::Ref<const Matrix>& x, std::size_t max_bins = 0);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t bins(Index feature) const { return offsets_[static_cast<std::size_t>(feature) + 1] - offsets_[static_cast<std::size_t>(feature)]; }
  std::size_t offset(Index feature) const { return offsets_[static_cast<std::size_t>(feature)]; }
  std::size_t total_bins() const { return offsets_.back(); }
  const std::uint16_t* row(Index r) const { return codes_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_); }
  /// Cut value between bin b and b+1 of a feature: x < threshold goes left.
  double threshold(Index feature, std::size_t bin) const { return cuts_[offset(feature) + bin]; }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<std::uint16_t> codes_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> cuts_;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double gain = 0.0;
  double cover = 0.0;

  bool leaf() const { return feature < 0; }
};

/// Binary regression tree over dense features; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const double* row, Index stride) const;
  template <typename Derived>
  double predict(const Eigen::DenseBase<Derived>& row) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = row(n.feature) < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
  /// Features used by any split.
  std::vector<int> split_features() const;
  int depth() const;
};

nlohmann::json to_json(const Tree& tree);
Tree tree_from_json(const nlohmann::json& j);

/// Split objective over two additive per-row statistics (a, b), e.g. the
/// gradient/hessian pair or weighted positives/weight.
struct SplitCriterion {
  enum class Kind { newton, gini } kind = Kind::newton;
  double l1 = 0.0;
  double l2 = 0.0;
  double min_split_gain = 0.0;  // split admitted only if gain > this
  double min_child_b = 0.0;     // lower bound on each child's b-sum
  double leaf_scale = 1.0;      // newton: learning rate
};

struct GrowOptions {
  int max_depth = 6;
  SplitCriterion criterion;
};

/// Greedy depth-first growth on the given rows / features. Row r contributes
/// (a[r], b[r]) times weights[r] (1 when weights is empty). Node totals are
/// summed exactly, so a row of weight w and w copies of it give the same leaf.
Tree grow_tree(const BinnedMatrix& x, std::span<const double> a, std::span<const double> b,
               std::vector<std::uint32_t> rows, std::span<const int> features, const GrowOptions& options,
               std::span<const double> weights = {});

double soft_threshold(double g, double alpha);
/// Newton leaf weight -T(G)/(H + l2) before learning-rate scaling.
double newton_leaf(double g, double h, double l1, double l2);

}  // namespace lfu
