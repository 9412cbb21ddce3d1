#pragma once

#include "lfu/frame.hpp"

#include <array>

namespace lfu {

struct SplitPlan {
  int pes_months = 6;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};

  void validate() const;
};

/// Row indices (into the source frame) of each partition.
struct SplitIndices {
  std::vector<std::size_t> modeling;
  std::vector<std::size_t> pes;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct ForwardSplit {
  Frame modeling;
  Frame pes;
};

struct Partitions {
  Frame train;
  Frame val;
  Frame test;
};

/// Trailing `pes_months` distinct months go to passive evaluation.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> forward_split_indices(const Frame& frame, int pes_months);
ForwardSplit forward_split(const Frame& frame, const SplitPlan& plan);

/// Stable chronological order; ceil sizes for train and val, rest to test.
std::array<std::vector<std::size_t>, 3> chronological_indices(const Frame& frame, const std::array<double, 3>& fractions);
Partitions chronological_partition(const Frame& frame, const std::array<double, 3>& fractions);

/// Indices of all five partitions relative to `frame`.
SplitIndices plan_split(const Frame& frame, const SplitPlan& plan);

nlohmann::json to_json(const SplitIndices& split);
SplitIndices split_indices_from_json(const nlohmann::json& j);

}  // namespace lfu
