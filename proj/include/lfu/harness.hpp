#pragma once

#include "lfu/encode.hpp"
#include "lfu/model.hpp"
#include "lfu/split.hpp"
#include "lfu/stats.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <ostream>

namespace lfu {

// --- thresholds and cohorts -------------------------------------------------

/// The m-th largest score, m = max(1, floor(k n / 100)). Targeted: score >= threshold.
double global_threshold(const Vector& scores, double k = 20.0);
std::map<std::string, double> local_thresholds(const Vector& scores, std::span<const std::string> cohorts,
                                               double k = 20.0);

/// Cohort label of every row: category token, month index, or "__missing__".
std::vector<std::string> cohort_ids(const Frame& frame, std::string_view column);

enum class ThresholdMode { global, local };

struct CohortRow {
  std::string cohort;
  std::size_t n = 0;
  std::size_t positives = 0;
  double threshold = 0.0;
  double effective_k = 0.0;
  /// NaN when the cohort has no positives.
  double recall = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct CohortReport {
  std::string column;
  ThresholdMode mode = ThresholdMode::global;
  double k = 20.0;
  std::vector<CohortRow> rows;  // sorted by cohort name
};

CohortReport cohort_eval(const Frame& frame, const Vector& scores, std::string_view column, ThresholdMode mode,
                         double k = 20.0, std::size_t replicates = 1000, std::uint64_t seed = 0);
std::string cohort_csv(const CohortReport& report);

// --- hyperparameter search --------------------------------------------------

/// Sampling distributions for boosted-tree hyperparameters.
struct SearchSpace {
  std::pair<double, double> learning_rate{1e-7, 1.0};  // log-uniform
  std::vector<int> n_estimators;                        // empty = 50, 100, ..., 2000
  std::pair<int, int> max_depth{1, 9};
  std::pair<double, double> min_child_weight{1.0, 8.0};
  std::pair<double, double> scale_pos_weight{1.0, 90.0};
  std::pair<double, double> l1{1e-5, 1.0};  // log-uniform
  std::pair<double, double> l2{1e-3, 1.0};
  std::pair<double, double> subsample{0.5, 1.0};
  std::pair<double, double> colsample{0.5, 1.0};
  std::pair<int, int> min_split_loss{0, 8};
  std::size_t max_bins = 0;

  BoostParams sample(Rng& rng) const;
};

nlohmann::json to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& j);

struct Trial {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  nlohmann::json params;
  double objective = 0.0;
};

struct SearchResult {
  std::vector<Trial> trials;
  std::size_t best = 0;  // lowest index among maxima

  const Trial& best_trial() const { return trials[best]; }
};

/// Trial t draws from a generator seeded with seed ^ t; objective maximised.
SearchResult random_search(std::size_t budget, std::uint64_t seed,
                           const std::function<nlohmann::json(Rng&)>& sampler,
                           const std::function<double(const nlohmann::json&, std::uint64_t)>& objective);
SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const std::function<double(const BoostParams&)>& objective);
void write_trials_jsonl(const SearchResult& result, std::ostream& out);

// --- nested selection -------------------------------------------------------

struct SelectionConfig {
  std::vector<EncoderKind> encoders{EncoderKind::similarity};
  std::vector<Family> families{Family::boosted};
  EncoderParams encoder_params;
  SearchSpace space;
  std::size_t budget = 100;
  std::array<double, 3> fractions{0.6, 0.2, 0.2};
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
};

struct Candidate {
  std::string name;
  nlohmann::json params;
  double val_objective = 0.0;
  double test_objective = 0.0;
  Vector test_scores;
  SearchResult search;
};

struct SelectionOutcome {
  std::vector<Candidate> encoder_stage;
  std::vector<Candidate> model_stage;
  std::size_t best_encoder = 0;
  std::size_t best_model = 0;
  CDResult encoder_cd;
  CDResult model_cd;
  /// Refit on the whole modeling split.
  Pipeline final_pipeline;
  /// Partition tags of every frame read during selection.
  std::vector<std::string> accessed;
};

/// Refuses frames tagged as passive evaluation.
SelectionOutcome select_encoder_then_model(const Frame& modeling, const SelectionConfig& config);

/// Fits one family with the given hyperparameters (json as in the trial log).
Pipeline fit_pipeline(Family family, const std::optional<EncoderKind>& encoder, const EncoderParams& encoder_params,
                      const nlohmann::json& params, const Frame& train, const Vector& weights = Vector());

}  // namespace lfu
