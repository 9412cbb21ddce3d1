#include "lfu/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "data": {"synth": {"n": 3000}},
  "encoders": ["count", "similarity"],
  "families": ["boosted", "naive-bayes"],
  "search": {"budget": 2, "space": {"n_estimators": [20], "learning_rate": [0.05, 0.3], "max_bins": 64}},
  "metrics": {"bootstrap": 40},
  "explain": {"pfi_repeats": 2, "surrogate_samples": 300, "ale_bins": 5},
  "seed": 5
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lfu_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "lfu");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return lfu::cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

}  // namespace

TEST_CASE("argument and configuration errors exit with 2") {
  const fs::path dir = scratch("config");
  CHECK(run({"--out", dir.string(), "frobnicate"}) == 2);
  CHECK(run({"--out", dir.string()}) == 2);
  const auto bad = write_file(dir / "bad.json", R"({"search": {"budgett": 3}})");
  CHECK(run({"--config", bad, "--out", dir.string(), "synth"}) == 2);
  const auto malformed = write_file(dir / "malformed.json", "{");
  CHECK(run({"--config", malformed, "--out", dir.string(), "synth"}) == 2);
  CHECK(run({"--config", (dir / "absent.json").string(), "--out", dir.string(), "synth"}) == 2);
}

TEST_CASE("missing prerequisites exit with 3") {
  const fs::path dir = scratch("missing");
  CHECK(run({"--out", dir.string(), "train"}) == 3);
  CHECK(run({"--out", dir.string(), "evaluate"}) == 3);
}

TEST_CASE("selection on the passive-evaluation split is refused") {
  const fs::path dir = scratch("guard");
  const auto cfg = write_file(dir / "c.json", kSmallConfig);
  REQUIRE(run({"--config", cfg, "--out", dir.string(), "synth"}) == 0);
  REQUIRE(run({"--config", cfg, "--out", dir.string(), "ingest"}) == 0);
  REQUIRE(run({"--config", cfg, "--out", dir.string(), "split"}) == 0);
  CHECK(run({"--config", cfg, "--out", dir.string(), "select", "--data", (dir / "split.pes.csv").string()}) == 2);
}

TEST_CASE("the whole pipeline reruns byte for byte") {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const auto cfg = write_file(fs::temp_directory_path() / "lfu_cli_test_config.json", kSmallConfig);
  REQUIRE(run({"--config", cfg, "--out", a.string(), "run"}) == 0);
  REQUIRE(run({"--config", cfg, "--out", b.string(), "--threads", "1", "run"}) == 0);
  const auto sa = snapshot(a), sb = snapshot(b);
  CHECK(sa.size() == sb.size());
  for (const auto& [name, text] : sa) {
    CAPTURE(name);
    REQUIRE(sb.count(name) == 1);
    CHECK(sb.at(name) == text);
  }
  for (const char* report : {"report.table1.csv", "report.table2.csv", "report.table3.csv", "evaluate.metrics.csv"})
    CHECK(sa.count(report) == 1);
  // Every CSV names the configuration that produced it.
  CHECK(sa.at("evaluate.metrics.csv").rfind("# config_hash=", 0) == 0);
}
