#pragma once

#include "lfu/encode.hpp"
#include "lfu/frame.hpp"
#include "lfu/tree.hpp"

#include <array>
#include <map>
#include <optional>
#include <variant>

namespace lfu {

// --- rule baselines ---------------------------------------------------------

/// A feature qualifies when its token is in `categories` or, for numeric
/// features, when its value lies in [lo, hi]. Missing never qualifies.
struct RuleCondition {
  std::string feature;
  std::vector<std::string> categories;
  std::optional<std::pair<double, double>> interval;
};

struct Rule {
  std::string name;
  std::vector<RuleCondition> conditions;
};

/// Rules 1-3 over the synthetic register's column names.
std::vector<Rule> builtin_rules();
const Rule& builtin_rule(int number);

/// Fraction of the rule's features that qualify, per row.
Vector rule_score(const Rule& rule, const Frame& frame);

// --- boosted trees ----------------------------------------------------------

struct BoostParams {
  double learning_rate = 0.3;
  int n_estimators = 100;
  int max_depth = 6;
  double min_child_weight = 1.0;
  double scale_pos_weight = 1.0;
  double l1 = 0.0;
  double l2 = 1.0;
  double subsample = 1.0;
  double colsample = 1.0;
  double min_split_loss = 0.0;
  std::uint64_t seed = 0;
  /// 0 = exact greedy over every distinct value.
  std::size_t max_bins = 0;
};

nlohmann::json to_json(const BoostParams& p);
BoostParams boost_params_from_json(const nlohmann::json& j);

struct BoostedModel {
  double base_margin = 0.0;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
  BoostParams params;
  /// Training log-loss after each round (weighted, before positive weighting).
  std::vector<double> loss_curve;

  Vector margin(const Eigen::Ref<const Matrix>& x) const;
};

/// Per-unit-weight gradient and hessian of the logistic loss at the given
/// margins (positive-class scaling included) plus each row's sample weight.
/// A row contributes weight * grad and weight * hess.
struct NewtonStats {
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<double> weight;
};

NewtonStats newton_stats(const Vector& margin, const Labels& y, const Vector& weights, double scale_pos_weight);

// --- other learners ---------------------------------------------------------

struct TreeParams {
  int max_depth = 8;
  double min_leaf_weight = 1.0;
  std::size_t max_bins = 0;
};

struct TreeModel {
  Tree tree;
  std::vector<std::string> feature_names;
  TreeParams params;
};

struct NaiveBayesParams {
  double alpha = 1.0;  // Laplace pseudo-count
};

/// Per-class statistics on raw categoricals (weighted counts) and Gaussian
/// numerics.
struct NaiveBayesModel {
  struct Categorical {
    std::string column;
    std::map<std::string, std::array<double, 2>> counts;  // token -> (neg, pos)
  };
  struct Gaussian {
    std::string column;
    std::array<double, 2> mean{};
    std::array<double, 2> var{};
  };
  std::array<double, 2> class_weight{};
  std::vector<Categorical> categorical;
  std::vector<Gaussian> numeric;
  NaiveBayesParams params;
};

struct GamParams {
  double learning_rate = 0.05;
  int rounds = 200;
  std::size_t max_bins = 64;
  double l2 = 1.0;
  double min_child_weight = 1e-3;
};

/// Additive model: score = sigmoid(intercept + sum_j shape_j(x_j)).
struct GamModel {
  struct Shape {
    std::string column;
    bool numeric = false;
    std::vector<double> edges;            // numeric: upper bin edges
    std::vector<std::string> categories;  // categorical bins
    std::vector<double> values;           // one per bin, last = missing
  };
  double intercept = 0.0;
  std::vector<Shape> shapes;
  GamParams params;

  /// Contribution of every shape for every row (n x shapes).
  Matrix contributions(const Frame& frame) const;
};

struct ConstantModel {
  double score = 0.0;
};

struct RuleModel {
  Rule rule;
};

enum class Family { boosted, tree, naive_bayes, gam, rule, constant };
std::string_view to_string(Family f);
Family parse_family(std::string_view text);

/// Fitted scorer with its training metadata.
struct Model {
  std::variant<ConstantModel, BoostedModel, TreeModel, NaiveBayesModel, GamModel, RuleModel> body;
  std::vector<std::string> warnings;

  Family family() const;
  /// Models that consume the raw frame rather than an encoded matrix.
  bool reads_frame() const;
};

Model fit_boosted(const FeatureMatrix& x, const Labels& y, const Vector& weights, const BoostParams& params);
Model fit_boosted(const BinnedMatrix& binned, const std::vector<std::string>& names, const Labels& y,
                  const Vector& weights, const BoostParams& params);
Model fit_tree(const FeatureMatrix& x, const Labels& y, const Vector& weights, const TreeParams& params);
Model fit_naive_bayes(const Frame& frame, const Vector& weights, const NaiveBayesParams& params = {});
Model fit_cyclic_gam(const Frame& frame, const Vector& weights, const GamParams& params);

Vector predict(const Model& model, const FeatureMatrix& x);
Vector predict(const Model& model, const Frame& frame);

/// Element-wise mean of equally long score vectors.
Vector ensemble_average(std::span<const Vector> scores);

/// Optional encoder plus model; scores raw frames.
struct Pipeline {
  std::optional<Encoder> encoder;
  Model model;
  std::string name;

  Vector predict(const Frame& frame) const;
};

/// Averages member pipelines.
struct Ensemble {
  std::vector<Pipeline> members;
  Vector predict(const Frame& frame) const;
};

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Pipeline& p);
Pipeline pipeline_from_json(const nlohmann::json& j);

}  // namespace lfu
