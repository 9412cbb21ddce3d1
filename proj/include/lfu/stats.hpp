#pragma once

#include "lfu/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>

namespace lfu {

using MetricFn = std::function<double(const Vector& scores, const Labels& labels)>;

/// Named metric: "recall@<k>", "precision@<k>", "avrecall", "auc_roc", "auc_pr".
MetricFn metric_by_name(std::string_view name);

/// Rows drawn with replacement for replicate b; generator seeded with seed ^ b.
std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed, std::size_t b);

/// Metric replicates of every method on shared resamples.
struct BootstrapSet {
  std::vector<std::string> methods;
  Matrix replicates;  // B x methods
  std::uint64_t seed = 0;
  /// Hash of the sampled row indices per replicate.
  std::vector<std::uint64_t> checksums;
};

BootstrapSet bootstrap_metric(std::span<const Vector> scores, std::span<const std::string> methods,
                              const Labels& labels, std::size_t replicates, std::uint64_t seed, const MetricFn& metric);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile interval with linear interpolation between order statistics.
Interval confidence_interval(std::span<const double> replicates, double level = 0.95);
double quantile(std::vector<double> values, double q);

/// Friedman chi-square over blocks (rows) and treatments (columns); larger
/// values rank better. Average ranks on ties, tie-corrected statistic.
struct FriedmanResult {
  Vector average_rank;
  double statistic = 0.0;
  double p_value = 1.0;
};
FriedmanResult friedman(const Matrix& blocks);

/// Two-sided Wilcoxon signed-rank test (normal approximation, zero
/// differences dropped, tie-corrected variance).
double wilcoxon_signed_rank(const Vector& a, const Vector& b);

/// Holm step-down adjustment; output in input order.
std::vector<double> holm(std::span<const double> p_values);

double chi_square_sf(double x, double dof);

struct CDResult {
  std::vector<std::string> methods;
  Vector average_rank;
  double friedman_statistic = 0.0;
  double friedman_p = 1.0;
  bool rejected = false;
  Matrix raw_p;       // pairwise, 1 on the diagonal
  Matrix adjusted_p;  // Holm over the upper triangle
  /// Maximal groups (method indices, best rank first) with all pairwise p > alpha.
  std::vector<std::vector<std::size_t>> cliques;
};

CDResult friedman_cd(const BootstrapSet& set, double alpha = 0.05);

/// Rows: method, avg_rank, clique_id (one row per membership).
std::string cd_csv(const CDResult& cd);
nlohmann::json to_json(const CDResult& cd);

}  // namespace lfu
