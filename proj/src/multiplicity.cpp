#include "lfu/multiplicity.hpp"

#include "lfu/harness.hpp"

#include <nlohmann/json.hpp>

namespace lfu {

std::vector<std::uint8_t> binarize_top_k(const Vector& scores, double k) {
  const double t = global_threshold(scores, k);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.size(); ++i) out[static_cast<std::size_t>(i)] = scores(i) >= t;
  return out;
}

EpsilonSet build_epsilon_set(std::span<const Vector> scores, const Labels& labels,
                             const std::function<double(const Vector&, const Labels&)>& metric, double epsilon,
                             double k) {
  if (scores.empty()) throw ConfigError("epsilon set: no candidate models");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon set: epsilon must be in [0, 1)");
  EpsilonSet set;
  set.epsilon = epsilon;
  for (const auto& s : scores) {
    if (s.size() != labels.size()) throw DataError("epsilon set: score length mismatch");
    set.metrics.push_back(metric(s, labels));
  }
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (set.metrics[i] > set.metrics[set.baseline]) set.baseline = i;
  const double p = set.metrics[set.baseline];
  const auto n = static_cast<Index>(labels.size());
  const auto h0 = binarize_top_k(scores[set.baseline], k);
  set.baseline_predictions.resize(1, n);
  for (Index j = 0; j < n; ++j) set.baseline_predictions(0, j) = h0[static_cast<std::size_t>(j)];
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != set.baseline && set.metrics[i] >= (1.0 - epsilon) * p) set.members.push_back(i);
  set.member_predictions.resize(static_cast<Index>(set.members.size()), n);
  for (std::size_t m = 0; m < set.members.size(); ++m) {
    const auto h = binarize_top_k(scores[set.members[m]], k);
    for (Index j = 0; j < n; ++j) set.member_predictions(static_cast<Index>(m), j) = h[static_cast<std::size_t>(j)];
  }
  return set;
}

EpsilonSet epsilon_set_from_predictions(const std::vector<std::vector<std::uint8_t>>& rows, double epsilon) {
  if (rows.empty()) throw ConfigError("epsilon set: no candidate models");
  EpsilonSet set;
  set.epsilon = epsilon;
  const auto n = static_cast<Index>(rows.front().size());
  set.baseline_predictions.resize(1, n);
  set.member_predictions.resize(static_cast<Index>(rows.size() - 1), n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Index>(rows[r].size()) != n) throw DataError("epsilon set: prediction length mismatch");
    set.metrics.push_back(0.0);
    if (r > 0) set.members.push_back(r);
    for (Index j = 0; j < n; ++j) {
      const std::uint8_t v = rows[r][static_cast<std::size_t>(j)] != 0;
      if (r == 0) set.baseline_predictions(0, j) = v;
      else set.member_predictions(static_cast<Index>(r - 1), j) = v;
    }
  }
  return set;
}

std::vector<double> member_disagreement(const EpsilonSet& set) {
  const Index n = set.baseline_predictions.cols();
  std::vector<double> out;
  for (Index m = 0; m < set.member_predictions.rows(); ++m) {
    Index d = 0;
    for (Index j = 0; j < n; ++j) d += set.member_predictions(m, j) != set.baseline_predictions(0, j);
    out.push_back(n > 0 ? static_cast<double>(d) / static_cast<double>(n) : 0.0);
  }
  return out;
}

double ambiguity(const EpsilonSet& set) {
  const Index n = set.baseline_predictions.cols();
  if (n == 0) return 0.0;
  Index any = 0;
  for (Index j = 0; j < n; ++j) {
    bool differs = false;
    for (Index m = 0; m < set.member_predictions.rows() && !differs; ++m)
      differs = set.member_predictions(m, j) != set.baseline_predictions(0, j);
    any += differs;
  }
  return static_cast<double>(any) / static_cast<double>(n);
}

double discrepancy(const EpsilonSet& set) {
  double best = 0.0;
  for (double d : member_disagreement(set)) best = std::max(best, d);
  return best;
}

nlohmann::json to_json(const EpsilonSet& set) {
  return {{"epsilon", set.epsilon},
          {"baseline", set.baseline},
          {"n_members", set.members.size()},
          {"members", set.members},
          {"metrics", set.metrics},
          {"ambiguity", ambiguity(set)},
          {"discrepancy", discrepancy(set)},
          {"member_disagreement", member_disagreement(set)}};
}

}  // namespace lfu
