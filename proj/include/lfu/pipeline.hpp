#pragma once

#include "lfu/encode.hpp"
#include "lfu/harness.hpp"
#include "lfu/split.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>

namespace lfu {

/// Resolved run configuration. Unknown keys are rejected with the full path
/// of the offending field.
struct RunConfig {
  // data
  std::optional<SynthConfig> synth = SynthConfig{};
  struct Register {
    std::string csv;
    std::string schema;
  };
  /// CSV registers merged on `key`; the first is the spine. Used when synth is unset.
  std::vector<Register> registers;
  std::string key = "EpisodeID";

  SplitPlan split;
  std::vector<EncoderKind> encoders{EncoderKind::count,      EncoderKind::target,     EncoderKind::loo,
                                    EncoderKind::ordered_target, EncoderKind::prob_ratio, EncoderKind::odds_ratio,
                                    EncoderKind::log_odds,   EncoderKind::similarity, EncoderKind::minhash};
  std::vector<Family> families{Family::boosted, Family::tree, Family::naive_bayes, Family::gam};
  EncoderParams encoder_params;
  SearchSpace space;
  std::size_t budget = 100;

  std::vector<double> ks{10, 20, 30, 40};
  std::size_t bootstrap = 1000;
  std::vector<std::string> cohorts{"State", "District", "TypeOfCase", "PHIType", "Gender", "Month"};

  std::string fairness_column = "State";
  double fairness_tolerance = 0.02;
  std::string augment_column = "District";
  std::string augment_category;  // empty: worst cohort on the holdout
  int augment_copies = 10;

  double epsilon = 0.2;

  int pfi_repeats = 10;
  std::string ale_feature = "Age";
  int ale_bins = 20;
  std::size_t surrogate_samples = 5000;
  std::size_t surrogate_record = 0;

  std::uint64_t seed = 0;

  void validate() const;
  /// Canonical form; hashing it gives the config hash.
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

struct Context {
  RunConfig config;
  std::filesystem::path out;

  std::string hash() const { return config.hash(); }
  std::filesystem::path file(std::string_view command, std::string_view name, std::string_view ext) const;
};

/// Commands read earlier outputs from `ctx.out` and write `<command>.<name>.<ext>`.
void cmd_synth(const Context& ctx);
void cmd_ingest(const Context& ctx);
void cmd_split(const Context& ctx);
/// `data` overrides the modeling CSV; frames tagged as passive evaluation are refused.
void cmd_select(const Context& ctx, const std::optional<std::filesystem::path>& data = std::nullopt);
void cmd_train(const Context& ctx);
void cmd_evaluate(const Context& ctx);
void cmd_cohorts(const Context& ctx);
void cmd_fairness(const Context& ctx);
void cmd_multiplicity(const Context& ctx);
void cmd_explain(const Context& ctx);
void cmd_report(const Context& ctx);
void cmd_run(const Context& ctx);

/// Parses argv, runs one command and maps errors to exit codes
/// (0 ok, 2 config, 3 data, 4 internal).
int cli_main(int argc, char** argv);

}  // namespace lfu
