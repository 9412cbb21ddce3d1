#include "lfu/pipeline.hpp"

#include "lfu/equity.hpp"
#include "lfu/explain.hpp"
#include "lfu/metric.hpp"
#include "lfu/multiplicity.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace lfu {

// --- configuration ----------------------------------------------------------

namespace {

using Json = nlohmann::json;

void check_keys(const Json& j, std::string_view path, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(path) + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(std::string(path) + "." + key + ": unknown key");
}

template <typename T>
void read(const Json& j, std::string_view key, T& into, std::string_view path) {
  const std::string k(key);
  if (!j.contains(k)) return;
  try {
    j.at(k).get_to(into);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(path) + "." + std::string(key) + ": wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (synth) synth->validate();
  else if (registers.empty()) throw ConfigError("config.data: give either synth settings or registers");
  for (const auto& r : registers)
    if (r.csv.empty() || r.schema.empty()) throw ConfigError("config.data.registers: csv and schema are required");
  split.validate();
  if (encoders.empty()) throw ConfigError("config.encoders: empty");
  if (families.empty()) throw ConfigError("config.families: empty");
  if (budget < 1) throw ConfigError("config.search.budget: must be >= 1");
  if (bootstrap < 30) throw ConfigError("config.metrics.bootstrap: must be >= 30");
  if (ks.empty()) throw ConfigError("config.metrics.k: empty");
  for (double k : ks)
    if (!(k > 0.0 && k <= 100.0)) throw ConfigError("config.metrics.k: values must be in (0, 100]");
  if (!(fairness_tolerance >= 0.0)) throw ConfigError("config.fairness.tolerance: must be >= 0");
  if (augment_copies < 0) throw ConfigError("config.fairness.augment_copies: must be >= 0");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("config.multiplicity.epsilon: must be in [0, 1)");
  if (pfi_repeats < 1) throw ConfigError("config.explain.pfi_repeats: must be >= 1");
  if (ale_bins < 1) throw ConfigError("config.explain.ale_bins: must be >= 1");
  if (surrogate_samples < 2) throw ConfigError("config.explain.surrogate_samples: must be >= 2");
  if (encoder_params.smoothing < 0.0) throw ConfigError("config.encoder_params.smoothing: must be >= 0");
  if (encoder_params.max_prototypes < 1) throw ConfigError("config.encoder_params.max_prototypes: must be >= 1");
  if (encoder_params.minhash_dim < 1) throw ConfigError("config.encoder_params.minhash_dim: must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  Json regs = Json::array();
  for (const auto& r : registers) regs.push_back({{"csv", r.csv}, {"schema", r.schema}});
  std::vector<std::string> enc, fam;
  for (auto e : encoders) enc.emplace_back(lfu::to_string(e));
  for (auto f : families) fam.emplace_back(lfu::to_string(f));
  return {
      {"data", {{"synth", synth ? lfu::to_json(*synth) : Json()}, {"registers", regs}, {"key", key}}},
      {"split", {{"pes_months", split.pes_months}, {"fractions", split.fractions}}},
      {"encoders", enc},
      {"families", fam},
      {"encoder_params",
       {{"smoothing", encoder_params.smoothing},
        {"prior_weight", encoder_params.prior_weight},
        {"max_prototypes", encoder_params.max_prototypes},
        {"minhash_dim", encoder_params.minhash_dim}}},
      {"search", {{"budget", budget}, {"space", lfu::to_json(space)}}},
      {"metrics", {{"k", ks}, {"bootstrap", bootstrap}}},
      {"cohorts", cohorts},
      {"fairness",
       {{"column", fairness_column},
        {"tolerance", fairness_tolerance},
        {"augment_column", augment_column},
        {"augment_category", augment_category},
        {"augment_copies", augment_copies}}},
      {"multiplicity", {{"epsilon", epsilon}}},
      {"explain",
       {{"pfi_repeats", pfi_repeats},
        {"ale_feature", ale_feature},
        {"ale_bins", ale_bins},
        {"surrogate_samples", surrogate_samples},
        {"surrogate_record", surrogate_record}}},
      {"seed", seed},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  check_keys(j, "config",
             {"data", "split", "encoders", "families", "encoder_params", "search", "metrics", "cohorts", "fairness",
              "multiplicity", "explain", "seed"});
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "config.data", {"synth", "registers", "key"});
    if (d.contains("registers")) {
      c.synth.reset();
      for (const auto& r : d.at("registers")) {
        check_keys(r, "config.data.registers[]", {"csv", "schema"});
        Register reg;
        read(r, "csv", reg.csv, "config.data.registers[]");
        read(r, "schema", reg.schema, "config.data.registers[]");
        c.registers.push_back(reg);
      }
    }
    if (d.contains("synth")) {
      if (d.at("synth").is_null()) c.synth.reset();
      else c.synth = synth_config_from_json(d.at("synth"));
    }
    read(d, "key", c.key, "config.data");
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, "config.split", {"pes_months", "fractions"});
    read(s, "pes_months", c.split.pes_months, "config.split");
    read(s, "fractions", c.split.fractions, "config.split");
  }
  if (j.contains("encoders")) {
    c.encoders.clear();
    for (const auto& e : j.at("encoders")) c.encoders.push_back(parse_encoder_kind(e.get<std::string>()));
  }
  if (j.contains("families")) {
    c.families.clear();
    for (const auto& f : j.at("families")) c.families.push_back(parse_family(f.get<std::string>()));
  }
  if (j.contains("encoder_params")) {
    const auto& e = j.at("encoder_params");
    check_keys(e, "config.encoder_params", {"smoothing", "prior_weight", "max_prototypes", "minhash_dim"});
    read(e, "smoothing", c.encoder_params.smoothing, "config.encoder_params");
    read(e, "prior_weight", c.encoder_params.prior_weight, "config.encoder_params");
    read(e, "max_prototypes", c.encoder_params.max_prototypes, "config.encoder_params");
    read(e, "minhash_dim", c.encoder_params.minhash_dim, "config.encoder_params");
  }
  if (j.contains("search")) {
    const auto& s = j.at("search");
    check_keys(s, "config.search", {"budget", "space"});
    read(s, "budget", c.budget, "config.search");
    if (s.contains("space")) c.space = search_space_from_json(s.at("space"));
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    check_keys(m, "config.metrics", {"k", "bootstrap"});
    read(m, "k", c.ks, "config.metrics");
    read(m, "bootstrap", c.bootstrap, "config.metrics");
  }
  read(j, "cohorts", c.cohorts, "config");
  if (j.contains("fairness")) {
    const auto& f = j.at("fairness");
    check_keys(f, "config.fairness", {"column", "tolerance", "augment_column", "augment_category", "augment_copies"});
    read(f, "column", c.fairness_column, "config.fairness");
    read(f, "tolerance", c.fairness_tolerance, "config.fairness");
    read(f, "augment_column", c.augment_column, "config.fairness");
    read(f, "augment_category", c.augment_category, "config.fairness");
    read(f, "augment_copies", c.augment_copies, "config.fairness");
  }
  if (j.contains("multiplicity")) {
    const auto& m = j.at("multiplicity");
    check_keys(m, "config.multiplicity", {"epsilon"});
    read(m, "epsilon", c.epsilon, "config.multiplicity");
  }
  if (j.contains("explain")) {
    const auto& e = j.at("explain");
    check_keys(e, "config.explain", {"pfi_repeats", "ale_feature", "ale_bins", "surrogate_samples", "surrogate_record"});
    read(e, "pfi_repeats", c.pfi_repeats, "config.explain");
    read(e, "ale_feature", c.ale_feature, "config.explain");
    read(e, "ale_bins", c.ale_bins, "config.explain");
    read(e, "surrogate_samples", c.surrogate_samples, "config.explain");
    read(e, "surrogate_record", c.surrogate_record, "config.explain");
  }
  read(j, "seed", c.seed, "config");
  c.validate();
  return c;
}

std::string RunConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

std::filesystem::path Context::file(std::string_view command, std::string_view name, std::string_view ext) const {
  return out / (std::string(command) + "." + std::string(name) + "." + std::string(ext));
}

// --- artifact I/O -----------------------------------------------------------

namespace {

std::string stamp(const Context& ctx) {
  return "config_hash=" + ctx.hash() + " seed=" + std::to_string(ctx.config.seed);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing prerequisite: " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_report_csv(const Context& ctx, std::string_view command, std::string_view name, const std::string& body) {
  write_text(ctx.file(command, name, "csv"), "# " + stamp(ctx) + "\n" + body);
}

void write_report_json(const Context& ctx, std::string_view command, std::string_view name, Json j) {
  j["config_hash"] = ctx.hash();
  j["seed"] = ctx.config.seed;
  write_text(ctx.file(command, name, "json"), j.dump(2) + "\n");
}

Json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_frame(const Context& ctx, std::string_view command, std::string_view name, const Frame& frame) {
  std::string comment = stamp(ctx);
  if (!frame.partition().empty()) comment += " partition=" + frame.partition();
  write_csv(frame, ctx.file(command, name, "csv"), comment);
}

// Partition tag from the leading "# ... partition=x" line, if any.
std::string partition_tag(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing prerequisite: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.empty() || line[0] != '#') return "";
  const auto pos = line.find("partition=");
  if (pos == std::string::npos) return "";
  const auto end = line.find(' ', pos);
  return line.substr(pos + 10, end == std::string::npos ? std::string::npos : end - pos - 10);
}

Schema ingested_schema(const Context& ctx) {
  return parse_schema(read_json(ctx.file("ingest", "manifest", "json")).at("schema").get<std::string>());
}

Frame load_tagged(const std::filesystem::path& path, const Schema& schema) {
  return load_csv(path, schema).with_partition(partition_tag(path));
}

Frame load_partition(const Context& ctx, std::string_view name) {
  return load_tagged(ctx.file("split", name, "csv"), ingested_schema(ctx));
}

EncoderParams encoder_params(const Context& ctx) {
  EncoderParams p = ctx.config.encoder_params;
  p.seed = ctx.config.seed;
  return p;
}

SelectionConfig selection_config(const Context& ctx) {
  SelectionConfig s;
  s.encoders = ctx.config.encoders;
  s.families = ctx.config.families;
  s.encoder_params = encoder_params(ctx);
  s.space = ctx.config.space;
  s.budget = ctx.config.budget;
  s.fractions = ctx.config.split.fractions;
  s.replicates = ctx.config.bootstrap;
  s.seed = ctx.config.seed;
  return s;
}

std::optional<EncoderKind> selected_encoder(const Json& manifest) {
  return parse_encoder_kind(manifest.at("encoder").get<std::string>());
}

Pipeline load_pipeline(const Context& ctx) { return pipeline_from_json(read_json(ctx.file("train", "pipeline", "json")).at("pipeline")); }

std::vector<Pipeline> load_members(const Context& ctx) {
  std::vector<Pipeline> members;
  const Json j = read_json(ctx.file("train", "ensemble", "json"));
  for (const auto& p : j.at("members")) members.push_back(pipeline_from_json(p));
  return members;
}

// Scores keyed by method name, from evaluate.scores.csv.
std::vector<std::pair<std::string, Vector>> load_scores(const Context& ctx) {
  const std::string text = read_text(ctx.file("evaluate", "scores", "csv"));
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> cols;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (header.empty()) {
      header = fields;
      cols.resize(header.size());
      continue;
    }
    if (fields.size() != header.size()) throw DataError("evaluate.scores.csv: ragged row");
    for (std::size_t c = 1; c < fields.size(); ++c) cols[c].push_back(std::stod(fields[c]));
  }
  std::vector<std::pair<std::string, Vector>> out;
  for (std::size_t c = 1; c < header.size(); ++c)
    out.emplace_back(header[c], Eigen::Map<const Vector>(cols[c].data(), static_cast<Index>(cols[c].size())));
  return out;
}

const Vector& score_of(const std::vector<std::pair<std::string, Vector>>& scores, std::string_view name) {
  for (const auto& [n, v] : scores)
    if (n == name) return v;
  throw DataError("evaluate.scores.csv: no column " + std::string(name));
}

}  // namespace

// --- commands ---------------------------------------------------------------

void cmd_synth(const Context& ctx) {
  if (!ctx.config.synth) throw ConfigError("config.data.synth: not set");
  const auto s = synthesize(*ctx.config.synth, ctx.config.seed);
  write_frame(ctx, "synth", "data", s.frame);
  std::string truth = "EpisodeID,probability\n";
  const auto id = s.frame.schema().index_of("EpisodeID");
  for (std::size_t i = 0; i < s.frame.rows(); ++i)
    truth += std::string(s.frame.token(id, i)) + "," + format_number(s.truth.probability(static_cast<Index>(i))) + "\n";
  write_report_csv(ctx, "synth", "truth", truth);
  Json t = to_json(s.truth);
  t.erase("probability");
  write_report_json(ctx, "synth", "groundtruth", t);
  write_report_json(ctx, "synth", "manifest",
                    {{"schema", format_schema(s.frame.schema())}, {"data", "synth.data.csv"}, {"rows", s.frame.rows()}});
}

void cmd_ingest(const Context& ctx) {
  Frame frame;
  if (ctx.config.synth) {
    const Json m = read_json(ctx.file("synth", "manifest", "json"));
    frame = load_csv(ctx.out / m.at("data").get<std::string>(), parse_schema(m.at("schema").get<std::string>()));
  } else {
    std::vector<Frame> regs;
    for (const auto& r : ctx.config.registers) regs.push_back(load_csv(r.csv, load_schema(r.schema)));
    frame = regs.size() == 1 ? regs.front() : merge_registers(regs, ctx.config.key);
  }
  write_frame(ctx, "ingest", "data", frame);
  std::vector<std::string> cohorts;
  for (const auto& c : ctx.config.cohorts)
    if (frame.schema().find(c) && frame.schema().spec(c).kind != ColumnKind::numeric) cohorts.push_back(c);
  write_report_json(ctx, "ingest", "summary", to_json(summarize(frame, cohorts)));
  write_report_json(ctx, "ingest", "manifest", {{"schema", format_schema(frame.schema())}, {"data", "ingest.data.csv"}, {"rows", frame.rows()}});
}

void cmd_split(const Context& ctx) {
  const Schema schema = ingested_schema(ctx);
  const Frame frame = load_csv(ctx.file("ingest", "data", "csv"), schema);
  const SplitIndices idx = plan_split(frame, ctx.config.split);
  const Frame modeling = frame.take(idx.modeling).with_partition("modeling");
  const Frame pes = frame.take(idx.pes).with_partition("pes");
  write_frame(ctx, "split", "modeling", modeling);
  write_frame(ctx, "split", "pes", pes);
  write_report_json(ctx, "split", "manifest", to_json(idx));

  std::string csv = "partition,n,positives,prevalence,month_min,month_max\n";
  const auto months = frame.months();
  for (const auto& [name, rows] : std::vector<std::pair<std::string, const std::vector<std::size_t>*>>{
           {"modeling", &idx.modeling}, {"pes", &idx.pes}, {"train", &idx.train}, {"val", &idx.val}, {"test", &idx.test}}) {
    std::size_t pos = 0;
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    const Labels y = frame.labels();
    for (auto r : *rows) {
      pos += static_cast<std::size_t>(y(static_cast<Index>(r)));
      lo = std::min(lo, months[r]);
      hi = std::max(hi, months[r]);
    }
    const double prev = rows->empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(rows->size());
    csv += name + "," + std::to_string(rows->size()) + "," + std::to_string(pos) + "," + format_number(prev) + "," +
           (rows->empty() ? "" : std::to_string(lo)) + "," + (rows->empty() ? "" : std::to_string(hi)) + "\n";
  }
  write_report_csv(ctx, "split", "summary", csv);
}

void cmd_select(const Context& ctx, const std::optional<std::filesystem::path>& data) {
  const Schema schema = ingested_schema(ctx);
  const Frame modeling = load_tagged(data ? *data : ctx.file("split", "modeling", "csv"), schema);
  const SelectionOutcome out = select_encoder_then_model(modeling, selection_config(ctx));

  auto stage_csv = [](const std::vector<Candidate>& cands) {
    std::string csv = "candidate,val_avrecall,test_avrecall\n";
    for (const auto& c : cands) csv += c.name + "," + format_number(c.val_objective) + "," + format_number(c.test_objective) + "\n";
    return csv;
  };
  write_report_csv(ctx, "select", "encoders", stage_csv(out.encoder_stage));
  write_report_csv(ctx, "select", "models", stage_csv(out.model_stage));
  write_report_csv(ctx, "select", "encoder_cd", cd_csv(out.encoder_cd));
  write_report_csv(ctx, "select", "model_cd", cd_csv(out.model_cd));
  write_report_json(ctx, "select", "encoder_cd", to_json(out.encoder_cd));
  write_report_json(ctx, "select", "model_cd", to_json(out.model_cd));

  std::ostringstream log;
  log << Json{{"config_hash", ctx.hash()}, {"seed", ctx.config.seed}}.dump() << '\n';
  auto dump_stage = [&](std::string_view stage, const std::vector<Candidate>& cands) {
    for (const auto& c : cands) {
      std::ostringstream trials;
      write_trials_jsonl(c.search, trials);
      std::istringstream lines(trials.str());
      std::string line;
      while (std::getline(lines, line)) {
        Json j = Json::parse(line);
        j["stage"] = stage;
        j["candidate"] = c.name;
        log << j.dump() << '\n';
      }
    }
  };
  dump_stage("encoder", out.encoder_stage);
  dump_stage("model", out.model_stage);
  write_text(ctx.file("select", "trials", "jsonl"), log.str());

  Json models = Json::array(), encoders = Json::array();
  for (std::size_t i = 0; i < out.encoder_stage.size(); ++i)
    encoders.push_back({{"name", out.encoder_stage[i].name},
                        {"val", out.encoder_stage[i].val_objective},
                        {"test", out.encoder_stage[i].test_objective}});
  for (std::size_t i = 0; i < out.model_stage.size(); ++i)
    models.push_back({{"name", out.model_stage[i].name},
                      {"family", to_string(ctx.config.families[i])},
                      {"params", out.model_stage[i].params},
                      {"val", out.model_stage[i].val_objective},
                      {"test", out.model_stage[i].test_objective}});
  write_report_json(ctx, "select", "manifest",
                    {{"encoder", to_string(ctx.config.encoders[out.best_encoder])},
                     {"family", to_string(ctx.config.families[out.best_model])},
                     {"params", out.model_stage[out.best_model].params},
                     {"encoders", encoders},
                     {"models", models},
                     {"accessed", out.accessed}});
}

void cmd_train(const Context& ctx) {
  const Json sel = read_json(ctx.file("select", "manifest", "json"));
  const Frame modeling = load_partition(ctx, "modeling");
  const auto encoder = selected_encoder(sel);
  const EncoderParams ep = encoder_params(ctx);
  const Pipeline best = fit_pipeline(parse_family(sel.at("family").get<std::string>()), encoder, ep, sel.at("params"), modeling);
  write_report_json(ctx, "train", "pipeline", {{"pipeline", to_json(best)}});

  // Average ensemble of up to five best candidates by test AvRecall.
  std::vector<Json> models(sel.at("models").begin(), sel.at("models").end());
  std::stable_sort(models.begin(), models.end(),
                   [](const Json& a, const Json& b) { return a.at("test").get<double>() > b.at("test").get<double>(); });
  if (models.size() > 5) models.resize(5);
  Json members = Json::array();
  for (const auto& m : models)
    members.push_back(to_json(fit_pipeline(parse_family(m.at("family").get<std::string>()), encoder, ep, m.at("params"), modeling)));
  write_report_json(ctx, "train", "ensemble", {{"members", members}});
}

void cmd_evaluate(const Context& ctx) {
  const Frame pes = load_partition(ctx, "pes");
  const Labels y = pes.labels();
  const Pipeline model = load_pipeline(ctx);
  const std::vector<Pipeline> members = load_members(ctx);

  std::vector<std::string> names;
  std::vector<Vector> scores;
  names.push_back("model");
  scores.push_back(model.predict(pes));
  std::vector<Vector> member_scores;
  for (const auto& m : members) member_scores.push_back(m.predict(pes));
  names.push_back("ensemble");
  scores.push_back(ensemble_average(member_scores));
  for (int r = 1; r <= 3; ++r) {
    names.push_back("rule" + std::to_string(r));
    scores.push_back(rule_score(builtin_rule(r), pes));
  }
  Rng rng(splitmix64(ctx.config.seed) ^ 0x72616e646f6dULL);
  Vector random(static_cast<Index>(pes.rows()));
  for (Index i = 0; i < random.size(); ++i) random(i) = rng.uniform();
  names.push_back("random");
  scores.push_back(random);
  for (std::size_t m = 0; m < members.size(); ++m) {
    names.push_back("member" + std::to_string(m) + ":" + members[m].name);
    scores.push_back(member_scores[m]);
  }

  std::string sc = "EpisodeID";
  for (const auto& n : names) sc += "," + csv_escape(n);
  sc += "\n";
  const auto id = pes.schema().index_of(ctx.config.key);
  for (std::size_t i = 0; i < pes.rows(); ++i) {
    sc += csv_escape(pes.token(id, i));
    for (const auto& s : scores) sc += "," + format_number(s(static_cast<Index>(i)));
    sc += "\n";
  }
  write_report_csv(ctx, "evaluate", "scores", sc);

  std::vector<std::string> metrics;
  for (double k : ctx.config.ks) metrics.push_back("recall@" + format_number(k));
  if (std::find(metrics.begin(), metrics.end(), "recall@20") == metrics.end()) metrics.push_back("recall@20");
  metrics.insert(metrics.end(), {"avrecall", "precision@20", "auc_roc", "auc_pr"});
  const std::size_t headline = 6;  // model, ensemble, rules, random
  const std::span<const Vector> main_scores(scores.data(), headline);
  const std::span<const std::string> main_names(names.data(), headline);
  std::string csv = "method,metric,value,ci_lo,ci_hi,n,cohort\n";
  Json summary = Json::object();
  for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
    const MetricFn fn = metric_by_name(metrics[mi]);
    const auto set = bootstrap_metric(main_scores, main_names, y, ctx.config.bootstrap, splitmix64(ctx.config.seed) ^ mi, fn);
    for (std::size_t m = 0; m < headline; ++m) {
      const double value = fn(scores[m], y);
      const Vector col = set.replicates.col(static_cast<Index>(m));
      const auto ci = confidence_interval(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
      csv += names[m] + "," + metrics[mi] + "," + format_number(value) + "," + format_number(ci.lo) + "," +
             format_number(ci.hi) + "," + std::to_string(pes.rows()) + ",all\n";
      summary[names[m]][metrics[mi]] = value;
    }
  }
  write_report_csv(ctx, "evaluate", "metrics", csv);

  const auto cd_set = bootstrap_metric(main_scores, main_names, y, ctx.config.bootstrap, ctx.config.seed, metric_by_name("avrecall"));
  const CDResult cd = friedman_cd(cd_set);
  write_report_csv(ctx, "evaluate", "cd", cd_csv(cd));
  write_report_json(ctx, "evaluate", "cd", to_json(cd));
  write_report_json(ctx, "evaluate", "summary", {{"methods", summary}, {"n", pes.rows()}, {"positives", y.sum()}});
}

void cmd_cohorts(const Context& ctx) {
  const Frame pes = load_partition(ctx, "pes");
  const auto scores = load_scores(ctx);
  const Vector& s = score_of(scores, "model");
  Json all = Json::array();
  for (const auto& column : ctx.config.cohorts) {
    if (!pes.schema().find(column)) throw ConfigError("config.cohorts: column " + column + " not in data");
    std::string csv;
    for (auto mode : {ThresholdMode::global, ThresholdMode::local}) {
      const auto report = cohort_eval(pes, s, column, mode, 20.0, ctx.config.bootstrap, ctx.config.seed);
      std::string body = cohort_csv(report);
      if (!csv.empty()) body = body.substr(body.find('\n') + 1);
      csv += body;
      for (const auto& r : report.rows)
        all.push_back({{"column", column},
                       {"mode", mode == ThresholdMode::global ? "global" : "local"},
                       {"cohort", r.cohort},
                       {"n", r.n},
                       {"positives", r.positives},
                       {"recall", r.recall},
                       {"effective_k", r.effective_k},
                       {"ci_lo", r.ci_lo},
                       {"ci_hi", r.ci_hi}});
    }
    write_report_csv(ctx, "cohorts", column, csv);
  }
  write_report_json(ctx, "cohorts", "summary", {{"rows", all}});
}

void cmd_fairness(const Context& ctx) {
  const Json sel = read_json(ctx.file("select", "manifest", "json"));
  const auto family = parse_family(sel.at("family").get<std::string>());
  const auto encoder = selected_encoder(sel);
  const EncoderParams ep = encoder_params(ctx);
  const Frame modeling = load_partition(ctx, "modeling");
  const Frame pes = load_partition(ctx, "pes");
  const auto [train_idx, val_idx, test_idx] = chronological_indices(modeling, ctx.config.split.fractions);
  std::vector<std::size_t> early = train_idx;
  early.insert(early.end(), val_idx.begin(), val_idx.end());
  const Frame fit_rows = modeling.take(early).with_partition("train");
  const Frame holdout = modeling.take(test_idx).with_partition("test");

  const Pipeline p = fit_pipeline(family, encoder, ep, sel.at("params"), fit_rows);
  const Vector hold_scores = p.predict(holdout);
  const Vector pes_scores = p.predict(pes);
  const auto hold_ids = cohort_ids(holdout, ctx.config.fairness_column);
  const auto pes_ids = cohort_ids(pes, ctx.config.fairness_column);
  ShiftOptions opt;
  opt.tolerance = ctx.config.fairness_tolerance;
  ShiftTable table = fit_shifts(hold_scores, holdout.labels(), hold_ids, opt);
  table.holdout = "modeling.test";
  write_report_json(ctx, "fairness", "shifts", to_json(table));

  const Vector mitigated = apply_shifts(pes_scores, pes_ids, table);
  const Labels y = pes.labels();
  const auto before = cohort_recalls(pes_scores, y, pes_ids);
  const auto after = cohort_recalls(mitigated, y, pes_ids);
  const double t_before = global_threshold(pes_scores), t_after = global_threshold(mitigated);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pes_ids.size(); ++i) groups[pes_ids[i]].push_back(i);
  std::string csv = "cohort,n,positives,recall_original,recall_mitigated,effective_k_original,effective_k_mitigated,shift\n";
  std::vector<double> rb, ra;
  for (const auto& [name, rows] : groups) {
    std::size_t pos = 0, kb = 0, ka = 0;
    for (auto i : rows) {
      pos += static_cast<std::size_t>(y(static_cast<Index>(i)));
      kb += pes_scores(static_cast<Index>(i)) >= t_before;
      ka += mitigated(static_cast<Index>(i)) >= t_after;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double r0 = before.count(name) ? before.at(name) : nan;
    const double r1 = after.count(name) ? after.at(name) : nan;
    if (before.count(name)) rb.push_back(r0), ra.push_back(r1);
    const auto shift = table.shifts.count(name) ? table.shifts.at(name) : 0.0;
    csv += csv_escape(name) + "," + std::to_string(rows.size()) + "," + std::to_string(pos) + "," + format_number(r0) + "," +
           format_number(r1) + "," + format_number(100.0 * static_cast<double>(kb) / static_cast<double>(rows.size())) + "," +
           format_number(100.0 * static_cast<double>(ka) / static_cast<double>(rows.size())) + "," + format_number(shift) + "\n";
  }
  write_report_csv(ctx, "fairness", "cohorts", csv);
  auto safe_gini = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() || s == 0.0 ? std::numeric_limits<double>::quiet_NaN() : gini(v);
  };

  // Duplication and reweighing for the configured (or worst holdout) cohort.
  std::string category = ctx.config.augment_category;
  const auto aug_hold_ids = cohort_ids(holdout, ctx.config.augment_column);
  if (category.empty()) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < aug_hold_ids.size(); ++i) pos[aug_hold_ids[i]] += static_cast<std::size_t>(holdout.labels()(static_cast<Index>(i)));
    double worst = 2.0;
    for (const auto& [name, r] : cohort_recalls(hold_scores, holdout.labels(), aug_hold_ids))
      if (pos[name] >= 5 && r < worst) worst = r, category = name;
  }
  const auto aug_pes_ids = cohort_ids(pes, ctx.config.augment_column);
  std::string aug = "method,category,overall_recall20,category_recall20\n";
  auto report_variant = [&](const std::string& method, const Vector& s) {
    const auto rec = cohort_recalls(s, y, aug_pes_ids);
    const double cat = rec.count(category) ? rec.at(category) : std::numeric_limits<double>::quiet_NaN();
    aug += method + "," + csv_escape(category) + "," + format_number(recall_at_k(s, y, 20.0)) + "," + format_number(cat) + "\n";
  };
  report_variant("original", pes_scores);
  if (!category.empty()) {
    const Frame dup = augment_duplicate(fit_rows, ctx.config.augment_column, category, ctx.config.augment_copies);
    report_variant("duplicate", fit_pipeline(family, encoder, ep, sel.at("params"), dup).predict(pes));
    const Vector w = reweigh_log_inverse(fit_rows, ctx.config.augment_column);
    report_variant("reweigh", fit_pipeline(family, encoder, ep, sel.at("params"), fit_rows, w).predict(pes));
  }
  write_report_csv(ctx, "fairness", "augment", aug);
  write_report_json(ctx, "fairness", "summary",
                    {{"column", ctx.config.fairness_column},
                     {"gap_original", recall_gap(pes_scores, y, pes_ids)},
                     {"gap_mitigated", recall_gap(mitigated, y, pes_ids)},
                     {"gini_original", safe_gini(rb)},
                     {"gini_mitigated", safe_gini(ra)},
                     {"holdout_gap_before", table.gap_before},
                     {"holdout_gap_after", table.gap_after},
                     {"augment_column", ctx.config.augment_column},
                     {"augment_category", category}});
}

void cmd_multiplicity(const Context& ctx) {
  const Frame pes = load_partition(ctx, "pes");
  const auto scores = load_scores(ctx);
  std::vector<Vector> cands;
  std::vector<std::string> names;
  for (const auto& [name, s] : scores)
    if (name == "model" || name.starts_with("member")) cands.push_back(s), names.push_back(name);
  const auto set = build_epsilon_set(cands, pes.labels(), metric_by_name("recall@20"), ctx.config.epsilon);
  Json j = to_json(set);
  j["candidates"] = names;
  write_report_json(ctx, "multiplicity", "report", j);
}

void cmd_explain(const Context& ctx) {
  const Frame modeling = load_partition(ctx, "modeling");
  const Frame pes = load_partition(ctx, "pes");
  const Pipeline model = load_pipeline(ctx);
  const Scorer scorer = [&](const Frame& f) { return model.predict(f); };
  const auto imp = pfi(scorer, pes, metric_by_name("recall@20"), "recall@20", ctx.config.pfi_repeats, ctx.config.seed);
  write_report_csv(ctx, "explain", "pfi", importance_csv(imp));
  if (pes.schema().find(ctx.config.ale_feature)) {
    const auto curve = ale(scorer, pes, ctx.config.ale_feature, ctx.config.ale_bins);
    write_report_csv(ctx, "explain", "ale", ale_csv(curve));
  }
  if (ctx.config.surrogate_record >= pes.rows()) throw ConfigError("config.explain.surrogate_record: beyond the evaluation rows");
  const std::vector<std::size_t> one{ctx.config.surrogate_record};
  const auto s = local_surrogate(scorer, modeling, pes.take(one).with_partition("pes"), ctx.config.surrogate_samples, 0.0,
                                 ctx.config.seed);
  Json j = to_json(s);
  j["record"] = std::string(pes.token(pes.schema().index_of(ctx.config.key), ctx.config.surrogate_record));
  write_report_json(ctx, "explain", "surrogate", j);
}

void cmd_report(const Context& ctx) {
  // State-wise split sizes and prevalence.
  const Frame modeling = load_partition(ctx, "modeling");
  const Frame pes = load_partition(ctx, "pes");
  const std::string state = pes.schema().find("State") ? "State" : ctx.config.fairness_column;
  std::map<std::string, std::array<double, 4>> rows;  // n_ms, pos_ms, n_pes, pos_pes
  auto tally = [&](const Frame& f, std::size_t off) {
    const auto ids = cohort_ids(f, state);
    const Labels y = f.labels();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (const std::string& key : {ids[i], std::string("Total")}) {
        rows[key][off] += 1.0;
        rows[key][off + 1] += y(static_cast<Index>(i));
      }
    }
  };
  tally(modeling, 0);
  tally(pes, 2);
  std::string t1 = "state,modeling_n,modeling_prevalence,pes_n,pes_prevalence\n";
  for (const auto& [name, r] : rows)
    t1 += csv_escape(name) + "," + format_number(r[0]) + "," + format_number(r[0] > 0 ? r[1] / r[0] : 0.0) + "," +
          format_number(r[2]) + "," + format_number(r[2] > 0 ? r[3] / r[2] : 0.0) + "\n";
  write_report_csv(ctx, "report", "table1", t1);

  const Json sel = read_json(ctx.file("select", "manifest", "json"));
  const Json eval = read_json(ctx.file("evaluate", "summary", "json")).at("methods");
  double best_rule = 0.0;
  for (int r = 1; r <= 3; ++r) best_rule = std::max(best_rule, eval.at("rule" + std::to_string(r)).at("recall@20").get<double>());
  std::string t2 = "encoder,val_avrecall,test_avrecall\n";
  for (const auto& e : sel.at("encoders"))
    t2 += e.at("name").get<std::string>() + "," + format_number(e.at("val").get<double>()) + "," +
          format_number(e.at("test").get<double>()) + "\n";
  write_report_csv(ctx, "report", "table2", t2);

  std::string t3 = "method,recall@20,avrecall,precision@20,auc_roc,auc_pr,lift_vs_best_rule,lift_vs_random\n";
  for (const auto& [name, m] : eval.items()) {
    const double r20 = m.at("recall@20").get<double>();
    t3 += name + "," + format_number(r20) + "," + format_number(m.at("avrecall").get<double>()) + "," +
          format_number(m.at("precision@20").get<double>()) + "," + format_number(m.at("auc_roc").get<double>()) + "," +
          format_number(m.at("auc_pr").get<double>()) + "," +
          (best_rule > 0.0 ? format_number(lift(r20, best_rule)) : std::string("nan")) + "," +
          format_number(lift(r20, 0.2)) + "\n";
  }
  write_report_csv(ctx, "report", "table3", t3);

  std::string tc = "column,mode,cohort,n,positives,recall,effective_k,ci_lo,ci_hi\n";
  const Json cohort_rows = read_json(ctx.file("cohorts", "summary", "json")).at("rows");
  for (const auto& r : cohort_rows) {
    auto num = [](const Json& v) { return v.is_null() ? std::string("nan") : format_number(v.get<double>()); };
    tc += csv_escape(r.at("column").get<std::string>()) + "," + r.at("mode").get<std::string>() + "," +
          csv_escape(r.at("cohort").get<std::string>()) + "," + std::to_string(r.at("n").get<std::size_t>()) + "," +
          std::to_string(r.at("positives").get<std::size_t>()) + "," + num(r.at("recall")) + "," + num(r.at("effective_k")) +
          "," + num(r.at("ci_lo")) + "," + num(r.at("ci_hi")) + "\n";
  }
  write_report_csv(ctx, "report", "cohorts", tc);

  const Json fair = read_json(ctx.file("fairness", "summary", "json"));
  auto num = [](const Json& v) { return v.is_null() ? std::string("nan") : format_number(v.get<double>()); };
  write_report_csv(ctx, "report", "gini",
                   "column,gini_original,gini_mitigated,gap_original,gap_mitigated\n" + fair.at("column").get<std::string>() +
                       "," + num(fair.at("gini_original")) + "," + num(fair.at("gini_mitigated")) + "," +
                       num(fair.at("gap_original")) + "," + num(fair.at("gap_mitigated")) + "\n");

  const Json mult = read_json(ctx.file("multiplicity", "report", "json"));
  write_report_csv(ctx, "report", "multiplicity",
                   "epsilon,n_members,ambiguity,discrepancy\n" + num(mult.at("epsilon")) + "," +
                       std::to_string(mult.at("n_members").get<std::size_t>()) + "," + num(mult.at("ambiguity")) + "," +
                       num(mult.at("discrepancy")) + "\n");
  write_report_json(ctx, "report", "config", {{"config", ctx.config.to_json()}});
}

void cmd_run(const Context& ctx) {
  if (ctx.config.synth) cmd_synth(ctx);
  cmd_ingest(ctx);
  cmd_split(ctx);
  cmd_select(ctx);
  cmd_train(ctx);
  cmd_evaluate(ctx);
  cmd_cohorts(ctx);
  cmd_fairness(ctx);
  cmd_multiplicity(ctx);
  cmd_explain(ctx);
  cmd_report(ctx);
}

}  // namespace lfu
