#pragma once

#include "lfu/frame.hpp"
#include "lfu/stats.hpp"

#include <nlohmann/json_fwd.hpp>

namespace lfu {

using Scorer = std::function<Vector(const Frame&)>;

struct Importance {
  std::string feature;
  double mean = 0.0;
  double std = 0.0;
};

struct ImportanceReport {
  std::string metric;
  int repeats = 10;
  std::uint64_t seed = 0;
  double baseline = 0.0;
  std::vector<Importance> features;  // in evaluation order
};

/// baseline metric minus the metric with one raw column permuted, averaged
/// over repeats. Repeat r of feature j permutes with seed splitmix64(seed ^ j) ^ r.
ImportanceReport pfi(const Scorer& scorer, const Frame& frame, const MetricFn& metric, std::string metric_name,
                     int repeats = 10, std::uint64_t seed = 0, std::vector<std::string> features = {});
/// Metric after permuting every listed column independently.
double permuted_metric(const Scorer& scorer, const Frame& frame, const MetricFn& metric,
                       std::span<const std::string> features, std::uint64_t seed);
Frame permute_column(const Frame& frame, std::string_view column, std::uint64_t seed);

struct ALECurve {
  std::string feature;
  std::vector<double> edges;        // bins + 1 quantile edges
  std::vector<std::size_t> counts;  // rows per bin (non-missing rows only)
  std::vector<double> local;        // mean score difference per bin
  std::vector<double> accumulated;  // running sum of local effects
  double centering = 0.0;           // count-weighted mean of accumulated
  std::vector<double> centered;
};

ALECurve ale(const Scorer& scorer, const Frame& frame, std::string_view feature, int bins = 20);

struct SurrogateResult {
  double intercept = 0.0;
  /// Categorical terms are "column=token" indicators of matching the record.
  std::vector<std::pair<std::string, double>> weights;
  double r2 = 0.0;
  double width = 0.0;
  bool ridge = false;
};

/// Weighted least squares fit to perturbations of `record` (one row).
/// Categoricals resample training marginals; numerics jitter by the column
/// std. Kernel exp(-d^2 / width^2); width <= 0 selects 0.75 sqrt(d).
SurrogateResult local_surrogate(const Scorer& scorer, const Frame& train, const Frame& record,
                                std::size_t samples = 5000, double width = 0.0, std::uint64_t seed = 0);

nlohmann::json to_json(const ImportanceReport& r);
nlohmann::json to_json(const ALECurve& c);
nlohmann::json to_json(const SurrogateResult& s);
std::string importance_csv(const ImportanceReport& r);
std::string ale_csv(const ALECurve& c);

}  // namespace lfu
