#include "lfu/split.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace lfu {

void SplitPlan::validate() const {
  if (pes_months < 1) throw ConfigError("split: pes_months must be >= 1");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split: every fraction must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> forward_split_indices(const Frame& frame, int pes_months) {
  if (pes_months < 1) throw ConfigError("split: pes_months must be >= 1");
  const auto months = frame.months();
  std::set<std::int32_t> distinct(months.begin(), months.end());
  if (static_cast<int>(distinct.size()) <= pes_months)
    throw DataError("split: frame spans " + std::to_string(distinct.size()) + " months, need more than " +
                    std::to_string(pes_months));
  auto it = distinct.end();
  std::advance(it, -pes_months);
  const std::int32_t cutoff = *it;
  std::vector<std::size_t> modeling, pes;
  for (std::size_t i = 0; i < months.size(); ++i) (months[i] >= cutoff ? pes : modeling).push_back(i);
  return {modeling, pes};
}

ForwardSplit forward_split(const Frame& frame, const SplitPlan& plan) {
  plan.validate();
  auto [m, p] = forward_split_indices(frame, plan.pes_months);
  return {frame.take(m).with_partition("modeling"), frame.take(p).with_partition("pes")};
}

std::array<std::vector<std::size_t>, 3> chronological_indices(const Frame& frame, const std::array<double, 3>& fractions) {
  for (double f : fractions)
    if (!(f > 0.0)) throw ConfigError("split: every fraction must be positive");
  const auto months = frame.months();
  std::vector<std::size_t> order(months.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return months[a] < months[b]; });

  const std::size_t n = order.size();
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
  auto ceil_size = [&](double f) {
    // Guard against 0.6 * 10 evaluating to 6.000000000000001.
    const double exact = f / total * static_cast<double>(n);
    const double rounded = std::round(exact);
    return static_cast<std::size_t>(std::abs(exact - rounded) < 1e-9 ? rounded : std::ceil(exact));
  };
  const std::size_t n_train = std::min(n, ceil_size(fractions[0]));
  const std::size_t n_val = std::min(n - n_train, ceil_size(fractions[1]));
  std::array<std::vector<std::size_t>, 3> out;
  out[0].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out[1].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out[2].assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

Partitions chronological_partition(const Frame& frame, const std::array<double, 3>& fractions) {
  auto idx = chronological_indices(frame, fractions);
  return {frame.take(idx[0]).with_partition("train"), frame.take(idx[1]).with_partition("val"),
          frame.take(idx[2]).with_partition("test")};
}

SplitIndices plan_split(const Frame& frame, const SplitPlan& plan) {
  plan.validate();
  SplitIndices out;
  std::tie(out.modeling, out.pes) = forward_split_indices(frame, plan.pes_months);
  const Frame modeling = frame.take(out.modeling);
  auto parts = chronological_indices(modeling, plan.fractions);
  auto lift = [&](const std::vector<std::size_t>& local) {
    std::vector<std::size_t> global;
    global.reserve(local.size());
    for (auto i : local) global.push_back(out.modeling[i]);
    return global;
  };
  out.train = lift(parts[0]);
  out.val = lift(parts[1]);
  out.test = lift(parts[2]);
  return out;
}

nlohmann::json to_json(const SplitIndices& s) {
  return {{"modeling", s.modeling}, {"pes", s.pes}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

SplitIndices split_indices_from_json(const nlohmann::json& j) {
  SplitIndices s;
  j.at("modeling").get_to(s.modeling);
  j.at("pes").get_to(s.pes);
  j.at("train").get_to(s.train);
  j.at("val").get_to(s.val);
  j.at("test").get_to(s.test);
  return s;
}

}  // namespace lfu
