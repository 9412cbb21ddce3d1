#include "lfu/metric.hpp"
#include "lfu/stats.hpp"

#include "support.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using namespace lfu;

namespace {

std::pair<Vector, Labels> noisy_scores(Rng& rng, std::size_t n, double signal) {
  Vector s(static_cast<Index>(n));
  Labels y(static_cast<Index>(n));
  for (Index i = 0; i < s.size(); ++i) {
    y(i) = rng.bernoulli(0.2) ? 1 : 0;
    s(i) = signal * y(i) + rng.normal();
  }
  return {s, y};
}

}  // namespace

TEST_CASE("bootstrap replicates share resamples across methods") {
  Rng rng(1);
  const auto [s, y] = noisy_scores(rng, 300, 1.0);
  const std::vector<Vector> scores{s, s};
  const std::vector<std::string> names{"a", "b"};
  const auto set = bootstrap_metric(scores, names, y, 50, 9, metric_by_name("auc_roc"));
  CHECK(set.replicates.col(0) == set.replicates.col(1));
  const auto again = bootstrap_metric(scores, names, y, 50, 9, metric_by_name("auc_roc"));
  CHECK(again.checksums == set.checksums);
  CHECK(again.replicates == set.replicates);
  CHECK(resample_indices(10, 9, 3) == resample_indices(10, 9, 3));
  CHECK_FALSE(resample_indices(100, 9, 3) == resample_indices(100, 9, 4));
}

TEST_CASE("percentile interval interpolates order statistics") {
  std::vector<double> v;
  for (int i = 0; i <= 100; ++i) v.push_back(i);
  const auto ci = confidence_interval(v, 0.95);
  CHECK(ci.lo == doctest::Approx(2.5));
  CHECK(ci.hi == doctest::Approx(97.5));
  CHECK(quantile({1.0, 2.0}, 0.5) == 1.5);
  CHECK_THROWS_AS(confidence_interval(std::vector<double>(5, 1.0)), ConfigError);
}

TEST_CASE("named metrics") {
  CHECK_THROWS_AS(metric_by_name("recall@x"), ConfigError);
  CHECK_THROWS_AS(metric_by_name("f1"), ConfigError);
  const Vector s = test::vec({0.9, 0.8, 0.7, 0.1});
  const Labels y = test::labels_of({1, 0, 1, 0});
  CHECK(metric_by_name("recall@50")(s, y) == 0.5);
  CHECK(metric_by_name("precision@50")(s, y) == 0.5);
}

TEST_CASE("friedman statistic against direct rank sums") {
  // Twelve blocks over three methods; rows are distinct, so ranks are 1..3 per row.
  Matrix m(12, 3);
  Rng rng(4);
  for (Index r = 0; r < 12; ++r)
    for (Index c = 0; c < 3; ++c) m(r, c) = rng.uniform() + 0.3 * static_cast<double>(c);
  Vector rank_sum = Vector::Zero(3);
  for (Index r = 0; r < 12; ++r)
    for (Index c = 0; c < 3; ++c) {
      double rank = 1.0;
      for (Index o = 0; o < 3; ++o)
        if (m(r, o) > m(r, c)) rank += 1.0;
      rank_sum(c) += rank;
    }
  const double b = 12.0, k = 3.0;
  const double chi2 = 12.0 / (b * k * (k + 1.0)) * rank_sum.squaredNorm() - 3.0 * b * (k + 1.0);
  const auto f = friedman(m);
  CHECK(f.statistic == doctest::Approx(chi2).epsilon(1e-12));
  CHECK(f.p_value == doctest::Approx(std::exp(-chi2 / 2.0)).epsilon(1e-10));  // two degrees of freedom
  CHECK(f.average_rank.sum() == doctest::Approx(6.0));
}

TEST_CASE("duplicated methods give a zero statistic and one clique") {
  Rng rng(2);
  const auto [s, y] = noisy_scores(rng, 400, 1.0);
  const std::vector<Vector> scores{s, s, s};
  const std::vector<std::string> names{"a", "b", "c"};
  const auto cd = friedman_cd(bootstrap_metric(scores, names, y, 100, 3, metric_by_name("avrecall")));
  CHECK(cd.friedman_statistic == 0.0);
  CHECK_FALSE(cd.rejected);
  REQUIRE(cd.cliques.size() == 1);
  CHECK(cd.cliques[0].size() == 3);
}

TEST_CASE("a dominant method ranks first and separates") {
  Rng rng(6);
  const auto [s, y] = noisy_scores(rng, 2000, 0.0);
  Vector strong = s, weak = s;
  for (Index i = 0; i < s.size(); ++i) strong(i) += 3.0 * y(i);
  for (Index i = 0; i < s.size(); ++i) weak(i) += 0.5 * y(i);
  const std::vector<Vector> scores{weak, strong};
  const std::vector<std::string> names{"weak", "strong"};
  const auto cd = friedman_cd(bootstrap_metric(scores, names, y, 200, 1, metric_by_name("recall@20")));
  CHECK(cd.average_rank(1) == 1.0);
  CHECK(cd.rejected);
  CHECK(cd.adjusted_p(0, 1) < 0.05);
  CHECK(cd.cliques.size() == 2);
  const auto j = to_json(cd);
  CHECK(j.at("pairs").size() == 1);
  CHECK(cd_csv(cd).rfind("method,avg_rank,clique_id\n", 0) == 0);
}

TEST_CASE("holm adjustment is monotone and bounded") {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.5};
  const auto a = holm(p);
  CHECK(a[0] == doctest::Approx(0.04));
  CHECK(a[2] == doctest::Approx(0.09));
  CHECK(a[1] == doctest::Approx(0.09));
  CHECK(a[3] == doctest::Approx(0.5));
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> q(1 + rng.below(10));
    for (auto& x : q) x = rng.uniform();
    const auto adj = holm(q);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(adj[i] >= q[i]);
      CHECK(adj[i] <= 1.0);
      for (std::size_t j = 0; j < q.size(); ++j)
        if (q[i] < q[j]) CHECK(adj[i] <= adj[j]);
    }
  }
}

TEST_CASE("wilcoxon on identical and shifted samples") {
  Rng rng(10);
  Vector a(60), b(60);
  for (Index i = 0; i < 60; ++i) a(i) = rng.normal();
  CHECK(wilcoxon_signed_rank(a, a) == 1.0);
  b = a.array() + 1.0;
  CHECK(wilcoxon_signed_rank(b, a) < 1e-6);
  CHECK(chi_square_sf(0.0, 3.0) == 1.0);
  CHECK(chi_square_sf(3.841458820694124, 1.0) == doctest::Approx(0.05).epsilon(1e-9));
}
