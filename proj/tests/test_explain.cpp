#include "lfu/explain.hpp"
#include "lfu/metric.hpp"

#include "support.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>

using namespace lfu;

namespace {

const char* kThreeFeatureSchema = "id = id\nmonth = timestamp\ncity = categorical\nage = numeric\nnoise = numeric\ny = label\n";

Frame sample_frame(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::string csv = "id,month,city,age,noise,y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double age = rng.uniform(18.0, 70.0);
    const bool x = rng.bernoulli(0.4);
    const double p = 1.0 / (1.0 + std::exp(-(0.1 * (age - 45.0) + (x ? 1.0 : -1.0))));
    csv += "r" + std::to_string(i) + ",0," + (x ? "x" : "z") + "," + format_number(age) + "," +
           format_number(rng.normal()) + "," + (rng.bernoulli(p) ? "1" : "0") + "\n";
  }
  return test::frame_from(csv, kThreeFeatureSchema);
}

// Reads age and city only.
Vector linear_scorer(const Frame& f) {
  Vector s(static_cast<Index>(f.rows()));
  const auto& age = f.column("age").values;
  for (std::size_t i = 0; i < f.rows(); ++i)
    s(static_cast<Index>(i)) = 0.02 * age[i] + (f.token("city", i) == "x" ? 0.3 : 0.0);
  return s;
}

}  // namespace

TEST_CASE("permutation importance is zero for an unread column") {
  const Frame f = sample_frame(2000, 1);
  const auto report = pfi(linear_scorer, f, metric_by_name("auc_roc"), "auc_roc", 5, 3);
  REQUIRE(report.features.size() == 3);
  CHECK(report.features[0].feature == "city");
  CHECK(report.features[2].feature == "noise");
  CHECK(report.features[2].mean == 0.0);
  CHECK(report.features[2].std == 0.0);
  CHECK(report.features[1].mean > report.features[0].mean);
  CHECK(report.features[1].mean > 0.0);
  CHECK(to_json(report).dump() == to_json(pfi(linear_scorer, f, metric_by_name("auc_roc"), "auc_roc", 5, 3)).dump());
  CHECK(importance_csv(report).rfind("feature,importance,std,metric,repeats\n", 0) == 0);
}

TEST_CASE("permuting keeps the multiset of values") {
  const Frame f = sample_frame(50, 2);
  const Frame g = permute_column(f, "age", 7);
  auto a = f.column("age").values, b = g.column("age").values;
  CHECK_FALSE(a == b);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("accumulated local effects of a linear score") {
  const Frame f = sample_frame(1000, 3);
  const auto c = ale(linear_scorer, f, "age", 10);
  CHECK(c.edges.size() == 11);
  CHECK(std::accumulate(c.counts.begin(), c.counts.end(), std::size_t{0}) == 1000);
  for (std::size_t k = 0; k < c.local.size(); ++k)
    CHECK(c.local[k] == doctest::Approx(0.02 * (c.edges[k + 1] - c.edges[k])).epsilon(1e-9));
  CHECK(c.accumulated.back() == doctest::Approx(0.02 * (c.edges.back() - c.edges.front())).epsilon(1e-9));
  double centered_mean = 0.0;
  for (std::size_t k = 0; k < c.counts.size(); ++k) centered_mean += static_cast<double>(c.counts[k]) * c.centered[k];
  CHECK(centered_mean / 1000.0 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(ale(linear_scorer, f, "city", 10), ConfigError);
  CHECK(ale_csv(c).rfind("feature,bin,", 0) == 0);
}

TEST_CASE("local surrogate recovers the slope of a linear score") {
  const Frame f = sample_frame(500, 4);
  const std::vector<std::size_t> one{7};
  const Frame record = f.take(one);
  const auto s = local_surrogate(linear_scorer, f, record, 4000, 0.0, 11);
  std::map<std::string, double> w(s.weights.begin(), s.weights.end());
  CHECK(w.at("age") == doctest::Approx(0.02).epsilon(0.05));
  CHECK(std::abs(w.at("noise")) < 1e-9);
  CHECK(s.r2 > 0.99);
  CHECK(to_json(s).dump() == to_json(local_surrogate(linear_scorer, f, record, 4000, 0.0, 11)).dump());
  CHECK_THROWS_AS(local_surrogate(linear_scorer, f, f, 100), ConfigError);
}

TEST_CASE("surrogate weights scale with the score") {
  const Frame f = sample_frame(300, 5);
  const std::vector<std::size_t> one{3};
  const Frame record = f.take(one);
  const auto a = local_surrogate(linear_scorer, f, record, 2000, 0.0, 2);
  const auto b = local_surrogate([](const Frame& g) -> Vector { return 3.0 * linear_scorer(g); }, f, record, 2000, 0.0, 2);
  for (std::size_t j = 0; j < a.weights.size(); ++j)
    CHECK(b.weights[j].second == doctest::Approx(3.0 * a.weights[j].second).epsilon(1e-9));
}
