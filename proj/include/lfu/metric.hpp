#pragma once

#include "lfu/common.hpp"

#include <span>

namespace lfu {

/// Number of targeted patients for k percent of n: floor(k n / 100), at least 1.
std::size_t targeted_count(std::size_t n, double k);

/// Indices sorted by descending score; ties keep ascending index.
std::vector<std::size_t> rank_order(const Vector& scores);

double recall_at_k(const Vector& scores, const Labels& labels, double k);
/// Mean of recall_at_k over the integer grid k_lo..k_hi.
double av_recall(const Vector& scores, const Labels& labels, int k_lo = 10, int k_hi = 40);
double precision_at_k(const Vector& scores, const Labels& labels, double k);
/// Mann-Whitney statistic with mid-ranks for ties.
double auc_roc(const Vector& scores, const Labels& labels);
/// Step-wise area: sum over distinct thresholds of (R_t - R_{t-1}) P_t.
double auc_pr(const Vector& scores, const Labels& labels);
/// Percentage change of value over reference.
double lift(double value, double reference);
/// Percentage of the cohort with score >= threshold.
double effective_k(const Vector& cohort_scores, double threshold);

}  // namespace lfu
