#include "lfu/split.hpp"

#include "support.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

using namespace lfu;
using lfu::test::frame_from;

namespace {

Frame months_frame(const std::vector<int>& months) {
  std::string csv = "id,month,city,age,y\n";
  for (std::size_t i = 0; i < months.size(); ++i)
    csv += "r" + std::to_string(i) + "," + std::to_string(months[i]) + ",c,1," + std::to_string(i % 2) + "\n";
  return frame_from(csv);
}

}  // namespace

TEST_CASE("last six of twelve months go to passive evaluation") {
  std::vector<int> months;
  for (int m = 0; m < 12; ++m)
    for (int r = 0; r < 3; ++r) months.push_back((m * 5 + r) % 12);
  const Frame f = months_frame(months);
  SplitPlan plan;
  const auto fs = forward_split(f, plan);
  CHECK(fs.modeling.rows() + fs.pes.rows() == f.rows());
  for (auto m : fs.modeling.months()) CHECK(m <= 5);
  for (auto m : fs.pes.months()) CHECK(m >= 6);
  CHECK(fs.pes.partition() == "pes");
  CHECK(fs.modeling.partition() == "modeling");
}

TEST_CASE("passive window covering every month is refused") {
  const Frame f = months_frame({0, 1, 2, 3, 4, 5});
  SplitPlan plan;
  plan.pes_months = 6;
  CHECK_THROWS_AS(forward_split(f, plan), DataError);
}

TEST_CASE("sixty twenty twenty of ten rows") {
  const Frame f = months_frame({0, 0, 1, 1, 2, 2, 3, 3, 4, 4});
  const auto [train, val, test] = chronological_indices(f, {0.6, 0.2, 0.2});
  CHECK(train.size() == 6);
  CHECK(val.size() == 2);
  CHECK(test.size() == 2);
}

TEST_CASE("degenerate fractions are refused") {
  const Frame f = months_frame({0, 1, 2});
  CHECK_THROWS_AS(chronological_indices(f, {1.0, 0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(chronological_indices(f, {0.5, 0.2, 0.2}), ConfigError);
}

TEST_CASE("chronological partitions are disjoint, exhaustive and ordered") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rng.below(200);
    std::vector<int> months(n);
    for (auto& m : months) m = static_cast<int>(rng.below(12));
    const Frame f = months_frame(months);
    const auto parts = chronological_indices(f, {0.6, 0.2, 0.2});
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& p : parts) {
      seen.insert(p.begin(), p.end());
      total += p.size();
    }
    CHECK(total == n);
    CHECK(seen.size() == n);
    auto max_month = [&](const std::vector<std::size_t>& idx) {
      int m = -1;
      for (auto i : idx) m = std::max(m, months[i]);
      return m;
    };
    auto min_month = [&](const std::vector<std::size_t>& idx) {
      int m = 1 << 30;
      for (auto i : idx) m = std::min(m, months[i]);
      return m;
    };
    if (!parts[1].empty()) CHECK(max_month(parts[0]) <= min_month(parts[1]));
    if (!parts[2].empty()) CHECK(max_month(parts[0]) <= min_month(parts[2]));
    if (!parts[1].empty() && !parts[2].empty()) CHECK(max_month(parts[1]) <= min_month(parts[2]));
    CHECK(chronological_indices(f, {0.6, 0.2, 0.2}) == parts);
  }
}

TEST_CASE("rows within a month keep their original order") {
  const Frame f = months_frame({1, 0, 1, 0, 1});
  const auto [train, val, test] = chronological_indices(f, {0.6, 0.2, 0.2});
  CHECK(train == std::vector<std::size_t>{1, 3, 0});
  CHECK(val == std::vector<std::size_t>{2});
  CHECK(test == std::vector<std::size_t>{4});
}

TEST_CASE("split plan indices survive json") {
  std::vector<int> months;
  for (int i = 0; i < 60; ++i) months.push_back(i % 12);
  const Frame f = months_frame(months);
  const auto idx = plan_split(f, SplitPlan{});
  const auto back = split_indices_from_json(to_json(idx));
  CHECK(back.modeling == idx.modeling);
  CHECK(back.pes == idx.pes);
  CHECK(back.test == idx.test);
  CHECK(idx.train.size() + idx.val.size() + idx.test.size() == idx.modeling.size());
}
