#pragma once

#include "lfu/frame.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>

namespace lfu {

/// Originals followed by `copies` passes over the rows whose `column` token equals `category`.
Frame augment_duplicate(const Frame& train, std::string_view column, std::string_view category, int copies = 10);
/// Weight copies + 1 on matching rows, 1 elsewhere.
Vector duplication_weights(const Frame& train, std::string_view column, std::string_view category, int copies = 10);

/// weight_i = ln(N / N_cohort(i)).
Vector reweigh_log_inverse(const Frame& train, std::string_view column);

struct ShiftTable {
  std::map<std::string, double> shifts;
  double k = 20.0;
  double tolerance = 0.02;
  std::string holdout;
  std::vector<std::string> excluded;  // cohorts without positives
  double gap_before = 0.0;
  double gap_after = 0.0;
  int sweeps = 0;
};

struct ShiftOptions {
  double k = 20.0;
  double tolerance = 0.02;
  double bound = 0.5;
  double initial_step = 0.1;
  double min_step = 1e-4;
  int max_sweeps = 100;
};

/// score_i + shift(cohort_i), clipped to [0, 1]; unknown cohorts shift by 0.
Vector apply_shifts(const Vector& scores, std::span<const std::string> cohorts, const ShiftTable& table);

/// Largest pairwise difference of cohort Recall@k under one global threshold
/// (cohorts without positives ignored).
double recall_gap(const Vector& scores, const Labels& labels, std::span<const std::string> cohorts, double k = 20.0);
std::map<std::string, double> cohort_recalls(const Vector& scores, const Labels& labels,
                                             std::span<const std::string> cohorts, double k = 20.0);

/// Coordinate search over per-cohort shifts; a move is kept only when it
/// strictly lowers the gap.
ShiftTable fit_shifts(const Vector& scores, const Labels& labels, std::span<const std::string> cohorts,
                      const ShiftOptions& options = {});

/// sum_ij |v_i - v_j| / (2 n^2 mean).
double gini(std::span<const double> values);

nlohmann::json to_json(const ShiftTable& table);
ShiftTable shift_table_from_json(const nlohmann::json& j);

}  // namespace lfu
