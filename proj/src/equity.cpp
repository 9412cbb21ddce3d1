#include "lfu/equity.hpp"

#include "lfu/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace lfu {

namespace {

std::vector<std::size_t> matching_rows(const Frame& frame, std::string_view column, std::string_view category) {
  const auto ids = cohort_ids(frame, column);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == category) rows.push_back(i);
  if (rows.empty()) throw DataError("category " + std::string(category) + " absent from " + std::string(column));
  return rows;
}

}  // namespace

Frame augment_duplicate(const Frame& train, std::string_view column, std::string_view category, int copies) {
  if (copies < 0) throw ConfigError("augmentation: copies must be >= 0");
  const auto match = matching_rows(train, column, category);
  std::vector<std::size_t> rows(train.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  for (int c = 0; c < copies; ++c) rows.insert(rows.end(), match.begin(), match.end());
  return train.take(rows).with_partition(train.partition());
}

Vector duplication_weights(const Frame& train, std::string_view column, std::string_view category, int copies) {
  if (copies < 0) throw ConfigError("augmentation: copies must be >= 0");
  Vector w = Vector::Ones(static_cast<Index>(train.rows()));
  for (auto i : matching_rows(train, column, category)) w(static_cast<Index>(i)) = copies + 1.0;
  return w;
}

Vector reweigh_log_inverse(const Frame& train, std::string_view column) {
  const auto ids = cohort_ids(train, column);
  std::map<std::string, double> size;
  for (const auto& id : ids) size[id] += 1.0;
  if (size.size() < 2) throw DataError("reweighing: a single cohort gives all-zero weights");
  const double n = static_cast<double>(ids.size());
  Vector w(static_cast<Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) w(static_cast<Index>(i)) = std::log(n / size[ids[i]]);
  return w;
}

Vector apply_shifts(const Vector& scores, std::span<const std::string> cohorts, const ShiftTable& table) {
  if (static_cast<Index>(cohorts.size()) != scores.size()) throw DataError("apply_shifts: cohort length mismatch");
  Vector out(scores.size());
  for (Index i = 0; i < scores.size(); ++i) {
    const auto it = table.shifts.find(cohorts[static_cast<std::size_t>(i)]);
    const double shift = it == table.shifts.end() ? 0.0 : it->second;
    out(i) = std::clamp(scores(i) + shift, 0.0, 1.0);
  }
  return out;
}

std::map<std::string, double> cohort_recalls(const Vector& scores, const Labels& labels,
                                             std::span<const std::string> cohorts, double k) {
  if (labels.size() != scores.size() || static_cast<Index>(cohorts.size()) != scores.size())
    throw DataError("cohort recall: length mismatch");
  const double t = global_threshold(scores, k);
  std::map<std::string, std::pair<double, double>> counts;  // (hits, positives)
  for (Index i = 0; i < scores.size(); ++i) {
    if (labels(i) != 1) continue;
    auto& c = counts[cohorts[static_cast<std::size_t>(i)]];
    c.second += 1.0;
    c.first += scores(i) >= t;
  }
  std::map<std::string, double> out;
  for (const auto& [name, c] : counts) out[name] = c.first / c.second;
  return out;
}

double recall_gap(const Vector& scores, const Labels& labels, std::span<const std::string> cohorts, double k) {
  const auto r = cohort_recalls(scores, labels, cohorts, k);
  if (r.size() < 2) return 0.0;
  double lo = 1.0, hi = 0.0;
  for (const auto& [name, v] : r) lo = std::min(lo, v), hi = std::max(hi, v);
  return hi - lo;
}

ShiftTable fit_shifts(const Vector& scores, const Labels& labels, std::span<const std::string> cohorts,
                      const ShiftOptions& options) {
  if (!(options.initial_step > 0.0) || !(options.min_step > 0.0) || options.max_sweeps < 0)
    throw ConfigError("fit_shifts: bad search options");
  ShiftTable table;
  table.k = options.k;
  table.tolerance = options.tolerance;
  std::set<std::string> all(cohorts.begin(), cohorts.end());
  const auto with_positives = cohort_recalls(scores, labels, cohorts, options.k);
  for (const auto& c : all) {
    table.shifts[c] = 0.0;
    if (!with_positives.count(c)) table.excluded.push_back(c);
  }
  auto gap_of = [&](const ShiftTable& t) { return recall_gap(apply_shifts(scores, cohorts, t), labels, cohorts, options.k); };
  double gap = gap_of(table);
  table.gap_before = gap;
  double step = options.initial_step;
  while (gap > options.tolerance && step >= options.min_step && table.sweeps < options.max_sweeps) {
    ++table.sweeps;
    bool improved = false;
    for (const auto& entry : with_positives) {
      const std::string& name = entry.first;
      double best_gap = gap;
      double best_shift = table.shifts[name];
      const double current = best_shift;
      for (double dir : {1.0, -1.0}) {
        const double candidate = std::clamp(current + dir * step, -options.bound, options.bound);
        if (candidate == current) continue;
        table.shifts[name] = candidate;
        const double g = gap_of(table);
        if (g < best_gap) best_gap = g, best_shift = candidate;
      }
      table.shifts[name] = best_shift;
      if (best_gap < gap) {
        gap = best_gap;
        improved = true;
      }
      if (gap <= options.tolerance) break;
    }
    if (!improved) step /= 2.0;
  }
  table.gap_after = gap;
  return table;
}

double gini(std::span<const double> values) {
  if (values.empty()) throw DataError("gini: empty input");
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0)) throw DataError("gini: values must be >= 0");
    sum += v;
  }
  if (sum == 0.0) throw DataError("gini: all-zero input");
  double diff = 0.0;
  for (double a : values)
    for (double b : values) diff += std::abs(a - b);
  const double n = static_cast<double>(values.size());
  return diff / (2.0 * n * n * (sum / n));
}

nlohmann::json to_json(const ShiftTable& t) {
  return {{"shifts", t.shifts},         {"k", t.k},
          {"tolerance", t.tolerance},   {"holdout", t.holdout},
          {"excluded", t.excluded},     {"gap_before", t.gap_before},
          {"gap_after", t.gap_after},   {"sweeps", t.sweeps}};
}

ShiftTable shift_table_from_json(const nlohmann::json& j) {
  ShiftTable t;
  j.at("shifts").get_to(t.shifts);
  for (const auto& [c, v] : t.shifts)
    if (!std::isfinite(v)) throw DataError("shift table: non-finite shift for " + c);
  t.k = j.value("k", 20.0);
  t.tolerance = j.value("tolerance", 0.02);
  t.holdout = j.value("holdout", std::string());
  t.excluded = j.value("excluded", std::vector<std::string>{});
  t.gap_before = j.value("gap_before", 0.0);
  t.gap_after = j.value("gap_after", 0.0);
  t.sweeps = j.value("sweeps", 0);
  return t;
}

}  // namespace lfu
