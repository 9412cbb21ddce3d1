#include "lfu/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace lfu {

namespace {

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw ConfigError("--config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("--config: malformed JSON: " + std::string(e.what()));
  }
  return RunConfig::from_json(j);
}

void write_resolved(const Context& ctx, const std::string& command) {
  nlohmann::json j = {{"config", ctx.config.to_json()}, {"config_hash", ctx.hash()}, {"seed", ctx.config.seed}};
  std::ofstream out(ctx.file(command, "config", "json"), std::ios::binary);
  if (!out) throw DataError("cannot write to " + ctx.out.string());
  out << j.dump(2) << '\n';
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Loss-to-follow-up risk stratification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  unsigned threads = 0;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker cap (0 = hardware)");

  std::optional<std::size_t> synth_n;
  std::optional<std::size_t> budget;
  std::string select_data;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "Generate a synthetic register"},
      {"ingest", "Load and merge registers"},
      {"split", "Forward and chronological splits"},
      {"select", "Encoder-then-model selection"},
      {"train", "Refit the selected pipeline and ensemble"},
      {"evaluate", "Rank metrics on the passive-evaluation split"},
      {"cohorts", "Cohort-wise recall under global and local thresholds"},
      {"fairness", "Score shifts and augmentation"},
      {"multiplicity", "Ambiguity and discrepancy of near-optimal models"},
      {"explain", "Permutation importance, ALE and local surrogate"},
      {"report", "Assemble report tables"},
      {"run", "Every command in order"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (name == "synth" || name == "run") sub->add_option("--n", synth_n, "Synthetic rows");
    if (name == "select" || name == "run") sub->add_option("--budget", budget, "Search trials per candidate");
    if (name == "select") sub->add_option("--data", select_data, "Modeling CSV to select on");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Context ctx{load_config(config_path), out_dir};
    if (seed) ctx.config.seed = *seed;
    if (synth_n) {
      if (!ctx.config.synth) throw ConfigError("--n: the configuration reads registers, not synthetic data");
      ctx.config.synth->n = *synth_n;
    }
    if (budget) ctx.config.budget = *budget;
    ctx.config.validate();
    set_max_threads(threads);
    std::filesystem::create_directories(ctx.out);

    const std::string command = app.get_subcommands().front()->get_name();
    write_resolved(ctx, command);
    if (command == "synth") cmd_synth(ctx);
    else if (command == "ingest") cmd_ingest(ctx);
    else if (command == "split") cmd_split(ctx);
    else if (command == "select") cmd_select(ctx, select_data.empty() ? std::nullopt : std::optional<std::filesystem::path>(select_data));
    else if (command == "train") cmd_train(ctx);
    else if (command == "evaluate") cmd_evaluate(ctx);
    else if (command == "cohorts") cmd_cohorts(ctx);
    else if (command == "fairness") cmd_fairness(ctx);
    else if (command == "multiplicity") cmd_multiplicity(ctx);
    else if (command == "explain") cmd_explain(ctx);
    else if (command == "report") cmd_report(ctx);
    else cmd_run(ctx);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace lfu
