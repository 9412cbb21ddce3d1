#pragma once

#include "lfu/frame.hpp"

#include <doctest.h>

#include <string>
#include <vector>

namespace lfu::test {

/// Small register layout used across the unit tests.
inline constexpr std::string_view kSchemaText =
    "id = id\n"
    "month = timestamp\n"
    "city = categorical\n"
    "age = numeric\n"
    "y = label\n";

inline Frame frame_from(std::string_view csv, std::string_view schema = kSchemaText) {
  return parse_csv(csv, parse_schema(schema));
}

/// n rows with one categorical column drawn from `levels` and labels from `label_of`.
template <typename LabelFn>
Frame categorical_frame(std::size_t n, const std::vector<std::string>& levels, Rng& rng, LabelFn label_of) {
  std::string csv = "id,month,city,age,y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& level = levels[rng.below(levels.size())];
    const double age = 18.0 + static_cast<double>(rng.below(50));
    csv += "r" + std::to_string(i) + "," + std::to_string(i * 12 / n) + "," + level + "," + format_number(age) + "," +
           (label_of(level, age, rng) ? "1" : "0") + "\n";
  }
  return frame_from(csv);
}

inline Labels labels_of(std::initializer_list<int> v) {
  Labels y(static_cast<Index>(v.size()));
  Index i = 0;
  for (int x : v) y(i++) = x;
  return y;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

}  // namespace lfu::test
