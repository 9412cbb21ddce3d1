#include "lfu/multiplicity.hpp"

#include "support.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

using namespace lfu;

namespace {

using Rows = std::vector<std::vector<std::uint8_t>>;

// Ambiguity and discrepancy straight from the prediction rows.
std::pair<double, double> by_hand(const Rows& rows) {
  const std::size_t n = rows[0].size();
  std::size_t any = 0, worst = 0;
  for (std::size_t j = 0; j < n; ++j) {
    bool differs = false;
    for (std::size_t m = 1; m < rows.size(); ++m) differs = differs || rows[m][j] != rows[0][j];
    any += differs;
  }
  for (std::size_t m = 1; m < rows.size(); ++m) {
    std::size_t d = 0;
    for (std::size_t j = 0; j < n; ++j) d += rows[m][j] != rows[0][j];
    worst = std::max(worst, d);
  }
  return {static_cast<double>(any) / static_cast<double>(n), static_cast<double>(worst) / static_cast<double>(n)};
}

}  // namespace

TEST_CASE("ten patient hand case") {
  const Rows rows{
      {1, 1, 0, 0, 0, 0, 0, 0, 0, 0},
      {0, 1, 1, 0, 0, 0, 0, 0, 0, 0},  // differs on patients 0 and 2
      {1, 1, 0, 1, 0, 0, 0, 0, 0, 0},  // differs on patient 3
  };
  const auto set = epsilon_set_from_predictions(rows);
  CHECK(ambiguity(set) == doctest::Approx(0.3));
  CHECK(discrepancy(set) == doctest::Approx(0.2));
  CHECK(member_disagreement(set) == std::vector<double>{0.2, 0.1});
}

TEST_CASE("identical members show no multiplicity") {
  const Rows rows(4, std::vector<std::uint8_t>{1, 0, 1, 0, 0});
  const auto set = epsilon_set_from_predictions(rows);
  CHECK(ambiguity(set) == 0.0);
  CHECK(discrepancy(set) == 0.0);
}

TEST_CASE("the epsilon band keeps models within twenty percent of the best") {
  Vector a = Vector::Zero(10), b = Vector::Zero(10), c = Vector::Zero(10);
  for (Index i = 0; i < 10; ++i) {
    a(i) = static_cast<double>(i);
    b(i) = static_cast<double>(10 - i);
    c(i) = static_cast<double>((3 * i) % 10);
  }
  a(0) = -0.6, b(0) = -0.5, c(0) = -0.4;  // tags for the metric below
  const std::vector<Vector> scores{b, a, c};
  const Labels y = Labels::Zero(10);
  const auto metric = [](const Vector& s, const Labels&) { return -s(0); };
  const auto set = build_epsilon_set(scores, y, metric, 0.2, 20.0);
  CHECK(set.baseline == 1);
  CHECK(set.members == std::vector<std::size_t>{0});
  CHECK(set.metrics == std::vector<double>{0.5, 0.6, 0.4});
  CHECK(to_json(set).at("n_members") == 1);
}

TEST_CASE("discrepancy never exceeds ambiguity on random sets") {
  Rng rng(13);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(50);
    Rows rows(1 + rng.below(6), std::vector<std::uint8_t>(n));
    for (auto& r : rows)
      for (auto& v : r) v = rng.bernoulli(0.3);
    const auto set = epsilon_set_from_predictions(rows);
    const auto [amb, disc] = by_hand(rows);
    CHECK(discrepancy(set) <= ambiguity(set));
    CHECK(ambiguity(set) == doctest::Approx(amb));
    CHECK(discrepancy(set) == doctest::Approx(disc));

    // Reordering members changes neither quantity.
    Rows shuffled = rows;
    rng.shuffle(shuffled.begin() + 1, shuffled.end());
    const auto other = epsilon_set_from_predictions(shuffled);
    CHECK(ambiguity(other) == ambiguity(set));
    CHECK(discrepancy(other) == discrepancy(set));
  }
}

TEST_CASE("top-k binarization marks the targeted fifth") {
  Vector s(10);
  for (Index i = 0; i < 10; ++i) s(i) = static_cast<double>(i);
  const auto b = binarize_top_k(s, 20.0);
  CHECK(std::count(b.begin(), b.end(), 1) == 2);
  CHECK(b[9] == 1);
  CHECK(b[8] == 1);
}
