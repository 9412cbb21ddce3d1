#include "lfu/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lfu {

namespace {

void check_pair(const Vector& scores, const Labels& labels) {
  if (scores.size() != labels.size()) throw DataError("metric: scores and labels differ in length");
  if (scores.size() == 0) throw DataError("metric: empty input");
  for (Index i = 0; i < labels.size(); ++i)
    if (labels(i) != 0 && labels(i) != 1) throw DataError("metric: labels must be 0/1");
}

void check_k(double k) {
  if (!(k > 0.0 && k <= 100.0)) throw ConfigError("metric: k must be in (0, 100]");
}

Index positives(const Labels& labels) { return labels.sum(); }

// Positives among the first m entries of the ranking, for every m.
std::vector<Index> cumulative_hits(const Vector& scores, const Labels& labels) {
  const auto order = rank_order(scores);
  std::vector<Index> hits(order.size() + 1, 0);
  for (std::size_t i = 0; i < order.size(); ++i) hits[i + 1] = hits[i] + labels(static_cast<Index>(order[i]));
  return hits;
}

}  // namespace

std::size_t targeted_count(std::size_t n, double k) {
  check_k(k);
  const auto m = static_cast<std::size_t>(std::floor(k * static_cast<double>(n) / 100.0));
  return std::clamp<std::size_t>(m, 1, n);
}

std::vector<std::size_t> rank_order(const Vector& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Index>(a)) > scores(static_cast<Index>(b));
  });
  return order;
}

double recall_at_k(const Vector& scores, const Labels& labels, double k) {
  check_pair(scores, labels);
  check_k(k);
  const Index p = positives(labels);
  if (p == 0) throw DataError("recall@k undefined without positives");
  const auto hits = cumulative_hits(scores, labels);
  return static_cast<double>(hits[targeted_count(hits.size() - 1, k)]) / static_cast<double>(p);
}

double av_recall(const Vector& scores, const Labels& labels, int k_lo, int k_hi) {
  check_pair(scores, labels);
  if (k_lo > k_hi) throw ConfigError("av_recall: empty k range");
  check_k(k_lo);
  check_k(k_hi);
  const Index p = positives(labels);
  if (p == 0) throw DataError("recall@k undefined without positives");
  const auto hits = cumulative_hits(scores, labels);
  double sum = 0.0;
  for (int k = k_lo; k <= k_hi; ++k)
    sum += static_cast<double>(hits[targeted_count(hits.size() - 1, k)]) / static_cast<double>(p);
  return sum / static_cast<double>(k_hi - k_lo + 1);
}

double precision_at_k(const Vector& scores, const Labels& labels, double k) {
  check_pair(scores, labels);
  const auto hits = cumulative_hits(scores, labels);
  const auto m = targeted_count(hits.size() - 1, k);
  return static_cast<double>(hits[m]) / static_cast<double>(m);
}

double auc_roc(const Vector& scores, const Labels& labels) {
  check_pair(scores, labels);
  const Index n = scores.size();
  const Index p = positives(labels);
  if (p == 0 || p == n) throw DataError("auc_roc needs both classes");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) < scores(b); });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores(order[j]) == scores(order[i])) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels(order[t]) == 1) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(p), nn = static_cast<double>(n - p);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_pr(const Vector& scores, const Labels& labels) {
  check_pair(scores, labels);
  const Index n = scores.size();
  const Index p = positives(labels);
  if (p == 0 || p == n) throw DataError("auc_pr needs both classes");
  const auto order = rank_order(scores);
  double area = 0.0, prev_recall = 0.0;
  Index tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const double s = scores(static_cast<Index>(order[i]));
    while (j < order.size() && scores(static_cast<Index>(order[j])) == s) tp += labels(static_cast<Index>(order[j++]));
    const double recall = static_cast<double>(tp) / static_cast<double>(p);
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double lift(double value, double reference) {
  if (!(reference > 0.0)) throw ConfigError("lift: reference must be > 0");
  return 100.0 * (value - reference) / reference;
}

double effective_k(const Vector& cohort_scores, double threshold) {
  if (cohort_scores.size() == 0) throw DataError("effective_k: empty cohort");
  const auto hit = (cohort_scores.array() >= threshold).count();
  return 100.0 * static_cast<double>(hit) / static_cast<double>(cohort_scores.size());
}

}  // namespace lfu
