#include "lfu/metric.hpp"

#include "support.hpp"

#include <algorithm>
#include <cmath>

using namespace lfu;
using lfu::test::labels_of;
using lfu::test::vec;

namespace {

// Recall of the first m rows after a stable descending sort, recomputed from scratch.
double recall_by_hand(const Vector& s, const Labels& y, double k) {
  std::vector<std::pair<double, Index>> rows;
  for (Index i = 0; i < s.size(); ++i) rows.emplace_back(s(i), i);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const auto n = static_cast<double>(s.size());
  auto m = static_cast<std::size_t>(std::floor(k * n / 100.0));
  m = std::max<std::size_t>(m, 1);
  double hits = 0.0;
  for (std::size_t i = 0; i < m; ++i) hits += y(rows[i].second);
  return hits / static_cast<double>(y.sum());
}

// Fraction of (positive, negative) pairs ordered correctly, ties count half.
double auc_by_hand(const Vector& s, const Labels& y) {
  double good = 0.0, pairs = 0.0;
  for (Index i = 0; i < s.size(); ++i)
    for (Index j = 0; j < s.size(); ++j)
      if (y(i) == 1 && y(j) == 0) {
        pairs += 1.0;
        good += s(i) > s(j) ? 1.0 : s(i) == s(j) ? 0.5 : 0.0;
      }
  return good / pairs;
}

std::pair<Vector, Labels> random_instance(Rng& rng, std::size_t n, double prevalence, bool ties) {
  Vector s(static_cast<Index>(n));
  Labels y(static_cast<Index>(n));
  for (Index i = 0; i < s.size(); ++i) {
    s(i) = ties ? static_cast<double>(rng.below(5)) : rng.uniform();
    y(i) = rng.bernoulli(prevalence) ? 1 : 0;
  }
  if (y.sum() == 0) y(0) = 1;
  if (y.sum() == y.size()) y(y.size() - 1) = 0;
  return {s, y};
}

}  // namespace

TEST_CASE("recall at fifty percent on four rows") {
  const Vector s = vec({0.9, 0.8, 0.7, 0.1});
  const Labels y = labels_of({1, 0, 1, 0});
  CHECK(recall_at_k(s, y, 50.0) == 0.5);
  CHECK(recall_at_k(s, y, 75.0) == 1.0);
  CHECK(targeted_count(4, 10.0) == 1);
  CHECK(targeted_count(1000, 20.0) == 200);
}

TEST_CASE("recall and average recall against brute force") {
  Rng rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    const auto [s, y] = random_instance(rng, 20 + rng.below(300), 0.1, rep % 2 == 0);
    for (double k : {1.0, 10.0, 20.0, 33.3, 100.0}) CHECK(recall_at_k(s, y, k) == recall_by_hand(s, y, k));
    double sum = 0.0;
    for (int k = 10; k <= 40; ++k) sum += recall_by_hand(s, y, k);
    CHECK(av_recall(s, y) == doctest::Approx(sum / 31.0).epsilon(1e-12));
  }
}

TEST_CASE("a perfect ranking recalls everything once k covers prevalence") {
  Vector s(100);
  Labels y(100);
  for (Index i = 0; i < 100; ++i) {
    y(i) = i < 10 ? 1 : 0;
    s(i) = 100.0 - static_cast<double>(i);
  }
  CHECK(recall_at_k(s, y, 10.0) == 1.0);
  CHECK(recall_at_k(s, y, 5.0) == 0.5);
  CHECK(av_recall(s, y) == 1.0);
}

TEST_CASE("precision in the top fifth") {
  Vector s(100);
  Labels y = Labels::Zero(100);
  for (Index i = 0; i < 100; ++i) s(i) = -static_cast<double>(i);
  y(0) = y(7) = y(19) = y(20) = y(50) = 1;
  CHECK(precision_at_k(s, y, 20.0) == doctest::Approx(0.15));
}

TEST_CASE("area under the ROC curve") {
  CHECK(auc_roc(vec({0.9, 0.8, 0.7, 0.1}), labels_of({1, 0, 1, 0})) == doctest::Approx(0.75));
  CHECK(auc_roc(vec({0.5, 0.5, 0.5, 0.5}), labels_of({1, 0, 1, 0})) == doctest::Approx(0.5));
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto [s, y] = random_instance(rng, 5 + rng.below(60), 0.3, rep % 2 == 0);
    CHECK(auc_roc(s, y) == doctest::Approx(auc_by_hand(s, y)).epsilon(1e-12));
    // Swapping the classes reflects the curve.
    const Labels flipped = (1 - y.array()).matrix();
    CHECK(auc_roc(s, y) + auc_roc(s, flipped) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("area under the precision-recall curve") {
  // Thresholds 0.9, 0.8, 0.7, 0.1: recall 1/2, 1/2, 1, 1 with precision 1, 1/2, 2/3, 1/2.
  CHECK(auc_pr(vec({0.9, 0.8, 0.7, 0.1}), labels_of({1, 0, 1, 0})) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
  CHECK(auc_pr(vec({1.0, 0.0}), labels_of({1, 0})) == 1.0);
}

TEST_CASE("lift is a percentage") {
  CHECK(lift(0.624, 0.314) == doctest::Approx(98.726).epsilon(1e-4));
  CHECK(lift(0.2, 0.2) == 0.0);
  CHECK_THROWS_AS(lift(0.5, 0.0), ConfigError);
}

TEST_CASE("effective k counts rows at or above the threshold") {
  CHECK(effective_k(vec({0.1, 0.5, 0.5, 0.9}), 0.5) == 75.0);
  CHECK(effective_k(vec({0.1, 0.2}), 0.9) == 0.0);
}

TEST_CASE("recall bounds and monotonicity on random instances") {
  Rng rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    const auto [s, y] = random_instance(rng, 100 + rng.below(400), rng.uniform(0.01, 0.5), rep % 3 == 0);
    const double p = 100.0 * static_cast<double>(y.sum()) / static_cast<double>(y.size());
    double prev = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double r = recall_at_k(s, y, k);
      CHECK(r <= std::min(1.0, k / p) + 1e-12);
      CHECK(r >= prev);
      prev = r;
    }
  }
}

TEST_CASE("metrics are invariant under monotone transforms and need valid input") {
  Rng rng(5);
  const auto [s, y] = random_instance(rng, 200, 0.2, false);
  const Vector t = (s.array() * 3.0).exp();
  CHECK(recall_at_k(s, y, 20) == recall_at_k(t, y, 20));
  CHECK(auc_roc(s, y) == auc_roc(t, y));
  CHECK(auc_pr(s, y) == auc_pr(t, y));
  CHECK_THROWS_AS(recall_at_k(s, Labels::Zero(200), 20), DataError);
  CHECK_THROWS_AS(recall_at_k(s, y, 0.0), ConfigError);
  CHECK_THROWS_AS(recall_at_k(vec({1.0}), y, 20), DataError);
}
