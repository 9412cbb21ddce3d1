#include "lfu/harness.hpp"
#include "lfu/metric.hpp"

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace lfu;
using lfu::test::vec;

namespace {

std::vector<std::string> random_cohorts(Rng& rng, std::size_t n, std::size_t groups) {
  std::vector<std::string> c(n);
  for (auto& x : c) x = "g" + std::to_string(rng.below(groups));
  return c;
}

}  // namespace

TEST_CASE("global threshold is the m-th largest score") {
  CHECK(global_threshold(vec({0.1, 0.9, 0.5, 0.7, 0.3}), 20.0) == 0.9);
  CHECK(global_threshold(vec({0.1, 0.9, 0.5, 0.7, 0.3}), 40.0) == 0.7);
  // Fewer than five rows still target one.
  CHECK(global_threshold(vec({0.2, 0.4}), 20.0) == 0.4);
}

TEST_CASE("local thresholds target k percent of every cohort") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 500 + rng.below(2000);
    Vector s(static_cast<Index>(n));
    for (Index i = 0; i < s.size(); ++i) s(i) = rng.uniform();
    const auto cohorts = random_cohorts(rng, n, 2 + rng.below(6));
    const auto local = local_thresholds(s, cohorts, 20.0);
    std::map<std::string, std::pair<double, double>> count;
    for (std::size_t i = 0; i < n; ++i) {
      auto& [hit, size] = count[cohorts[i]];
      size += 1.0;
      hit += s(static_cast<Index>(i)) >= local.at(cohorts[i]) ? 1.0 : 0.0;
    }
    for (const auto& [name, c] : count) CHECK(std::abs(100.0 * c.first / c.second - 20.0) <= 100.0 / c.second);
  }
}

TEST_CASE("a single cohort makes local and global identical") {
  Rng rng(4);
  Vector s(300);
  for (Index i = 0; i < s.size(); ++i) s(i) = rng.uniform();
  const std::vector<std::string> one(300, "all");
  CHECK(local_thresholds(s, one, 20.0).at("all") == global_threshold(s, 20.0));
}

TEST_CASE("cohort evaluation under both modes") {
  std::string csv = "id,month,city,age,y\n";
  for (int i = 0; i < 100; ++i)
    csv += "r" + std::to_string(i) + ",0," + (i < 50 ? "a" : "b") + ",30," + (i % 10 == 0 ? "1" : "0") + "\n";
  const Frame f = test::frame_from(csv);
  Vector s(100);
  // Cohort a holds every high score.
  for (Index i = 0; i < 100; ++i) s(i) = (i < 50 ? 1.0 : 0.0) + 0.001 * static_cast<double>(i % 50);
  const auto g = cohort_eval(f, s, "city", ThresholdMode::global, 20.0, 100, 1);
  REQUIRE(g.rows.size() == 2);
  CHECK(g.rows[0].effective_k == 40.0);
  CHECK(g.rows[1].effective_k == 0.0);
  CHECK(g.rows[1].recall == 0.0);
  const auto l = cohort_eval(f, s, "city", ThresholdMode::local, 20.0, 100, 1);
  for (const auto& r : l.rows) CHECK(r.effective_k == 20.0);
  CHECK(l.rows[0].ci_lo <= l.rows[0].recall);
  CHECK(l.rows[0].recall <= l.rows[0].ci_hi);
  CHECK(cohort_csv(l).find(",local\n") != std::string::npos);
  CHECK_THROWS_AS(cohort_ids(f, "age"), ConfigError);
  CHECK(cohort_ids(f, "month")[0] == "0");
}

TEST_CASE("random search keeps the first maximum and extends as a prefix") {
  auto sampler = [](Rng& rng) { return nlohmann::json{{"x", rng.below(3)}}; };
  auto objective = [](const nlohmann::json& j, std::uint64_t) { return j.at("x").get<double>(); };
  const auto small = random_search(10, 42, sampler, objective);
  const auto large = random_search(40, 42, sampler, objective);
  for (std::size_t t = 0; t < 10; ++t) CHECK(small.trials[t].params == large.trials[t].params);
  for (std::size_t t = 0; t < small.best; ++t) CHECK(small.trials[t].objective < small.best_trial().objective);
  CHECK(large.best_trial().objective >= small.best_trial().objective);

  const auto flat = random_search(5, 1, sampler, [](const nlohmann::json&, std::uint64_t) { return 1.0; });
  CHECK(flat.best == 0);
  const auto nan = random_search(3, 1, sampler, [](const nlohmann::json&, std::uint64_t t) {
    return t == 1 ? std::nan("") : 0.5;
  });
  CHECK(nan.best == 1);

  std::ostringstream log;
  write_trials_jsonl(small, log);
  const std::string text = log.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 10);
}

TEST_CASE("search space json and sampling ranges") {
  SearchSpace space;
  space.max_bins = 64;
  CHECK(to_json(search_space_from_json(to_json(space))) == to_json(space));
  CHECK_THROWS_AS(search_space_from_json(nlohmann::json{{"depth", 3}}), ConfigError);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const BoostParams p = space.sample(rng);
    CHECK(p.learning_rate >= 1e-7);
    CHECK(p.learning_rate <= 1.0);
    CHECK(p.n_estimators % 50 == 0);
    CHECK(p.max_depth <= 9);
    CHECK(p.subsample >= 0.5);
  }
}

TEST_CASE("selection refuses passive-evaluation rows and records what it read") {
  Rng rng(9);
  const Frame f = test::categorical_frame(600, {"low", "mid", "high"}, rng, [](const std::string& level, double, Rng& r) {
    return r.bernoulli(level == "high" ? 0.5 : level == "mid" ? 0.2 : 0.05);
  });
  SelectionConfig config;
  config.encoders = {EncoderKind::count, EncoderKind::target};
  config.families = {Family::boosted, Family::naive_bayes, Family::constant};
  config.space.n_estimators = {20};
  config.space.learning_rate = {0.05, 0.3};
  config.budget = 2;
  config.replicates = 50;
  CHECK_THROWS_AS(select_encoder_then_model(f.with_partition("pes"), config), ConfigError);

  const auto out = select_encoder_then_model(f.with_partition("modeling"), config);
  CHECK(out.encoder_stage.size() == 2);
  CHECK(out.model_stage.size() == 3);
  for (const auto& tag : out.accessed) CHECK(tag != "pes");
  CHECK(out.final_pipeline.predict(f).size() == 600);
  const auto again = select_encoder_then_model(f.with_partition("modeling"), config);
  CHECK(again.model_stage[out.best_model].test_scores == out.model_stage[out.best_model].test_scores);
}

TEST_CASE("an encoder that scrambles the signal is never selected over count encoding") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    // Frequent categories carry the risk, and there are too many of them to memorize by code.
    std::vector<std::string> levels;
    for (int c = 0; c < 1500; ++c) {
      const int copies = c < 150 ? 8 : 1;
      for (int k = 0; k < copies; ++k) levels.push_back("cat" + std::to_string(c));
    }
    const Frame f = test::categorical_frame(4000, levels, rng, [](const std::string& level, double, Rng& r) {
      return r.bernoulli(std::stoi(level.substr(3)) < 150 ? 0.25 : 0.03);
    });
    SelectionConfig config;
    config.encoders = {EncoderKind::count, EncoderKind::random_code};
    config.families = {Family::boosted};
    config.space.n_estimators = {30};
    config.space.learning_rate = {0.05, 0.3};
    config.space.max_depth = {2, 4};
    config.budget = 2;
    config.replicates = 0;
    config.seed = seed;
    const auto out = select_encoder_then_model(f.with_partition("modeling"), config);
    CAPTURE(seed);
    CHECK(config.encoders[out.best_encoder] == EncoderKind::count);
  }
}
