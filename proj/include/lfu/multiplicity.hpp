#pragma once

#include "lfu/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>

namespace lfu {

/// Best model h0 plus the members whose metric lies in [(1 - eps) p, p].
/// Predictions are 0/1: each model targets its own top-k% (score >= threshold).
struct EpsilonSet {
  double epsilon = 0.2;
  std::size_t baseline = 0;           // index of h0 among the candidates
  std::vector<std::size_t> members;   // candidate indices, h0 excluded
  std::vector<double> metrics;        // per candidate
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> baseline_predictions;  // 1 x n
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> member_predictions;    // members x n
};

/// Top-k% indicator under the global threshold of these scores.
std::vector<std::uint8_t> binarize_top_k(const Vector& scores, double k = 20.0);

EpsilonSet build_epsilon_set(std::span<const Vector> scores, const Labels& labels,
                             const std::function<double(const Vector&, const Labels&)>& metric, double epsilon = 0.2,
                             double k = 20.0);

/// Direct construction from 0/1 prediction rows (row 0 is h0).
EpsilonSet epsilon_set_from_predictions(const std::vector<std::vector<std::uint8_t>>& rows, double epsilon = 0.2);

/// Fraction of patients on whom some member disagrees with h0.
double ambiguity(const EpsilonSet& set);
/// Largest single-member disagreement fraction.
double discrepancy(const EpsilonSet& set);
std::vector<double> member_disagreement(const EpsilonSet& set);

nlohmann::json to_json(const EpsilonSet& set);

}  // namespace lfu
