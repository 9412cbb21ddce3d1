#include "lfu/frame.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace lfu {

namespace {

struct StateInfo {
  const char* name;
  const char* code;
  double weight;  // patient volume
  double effect;
};

// Volumes follow the four-state register totals.
constexpr std::array<StateInfo, 4> kStates{{
    {"Karnataka", "KA", 65120, 0.0},
    {"Uttar Pradesh", "UP", 376028, 0.25},
    {"West Bengal", "WB", 79807, -0.3},
    {"Maharashtra", "MH", 157997, -0.1},
}};

struct FacilityKind {
  const char* word;
  double effect;
  bool is_private;
};

constexpr std::array<FacilityKind, 8> kFacilityKinds{{
    {"District Hospital", -0.6, false},
    {"Medical College", -0.4, false},
    {"Primary Health Centre", 0.0, false},
    {"Community Health Centre", -0.1, false},
    {"Urban Clinic", 0.3, false},
    {"Private Clinic", 0.6, true},
    {"Private Nursing Home", 0.7, true},
    {"Chemist Shop", 0.9, true},
}};

constexpr std::array<const char*, 12> kSyllables{"ram", "pur", "nag", "gaon", "kota", "ali",
                                                 "bad", "ganj", "shah", "khed", "wadi", "pal"};

/// Binary-ish categorical with its frequencies and logit effects.
struct Attribute {
  const char* name;
  std::vector<const char*> levels;
  std::vector<double> freq;
  std::vector<double> effect;
};

std::vector<Attribute> attributes() {
  return {
      {"PHIType", {"public", "private"}, {}, {0.0, 0.2}},  // freq set from the facility
      {"Gender", {"M", "F", "T"}, {0.6, 0.39, 0.01}, {0.25, 0.0, 0.35}},
      {"TypeOfCase", {"DSTB", "DRTB"}, {0.96, 0.04}, {0.0, 1.4}},
      {"BankDetailsAdded", {"yes", "no"}, {0.65, 0.35}, {-1.2, 0.0}},
      {"ReasonForTesting", {"diagnosis", "followup"}, {0.85, 0.15}, {0.0, 0.8}},
      {"AlcoholIntake", {"present", "absent"}, {0.10, 0.90}, {0.35, 0.0}},
      {"HIVStatus", {"positive", "negative"}, {0.03, 0.97}, {0.4, 0.0}},
      {"DiabetesStatus", {"positive", "negative"}, {0.08, 0.92}, {0.1, 0.0}},
      {"HouseholdContacts", {"absent", "present"}, {0.30, 0.70}, {0.15, 0.0}},
      {"Migrant", {"yes", "no"}, {0.05, 0.95}, {0.4, 0.0}},
      {"MicrobiologicallyConfirmed", {"yes", "no"}, {0.60, 0.40}, {0.05, 0.0}},
      {"DiseaseSite", {"pulmonary", "extrapulmonary"}, {0.80, 0.20}, {0.1, 0.0}},
      {"UDSTDone", {"yes", "no"}, {0.50, 0.50}, {-0.1, 0.0}},
  };
}

constexpr std::array<int, 3> kNoiseCardinality{5, 20, 100};

std::string two_digits(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

std::string place_name(Rng& rng) {
  std::string s = kSyllables[rng.below(kSyllables.size())];
  s += kSyllables[rng.below(kSyllables.size())];
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

double calibrate_base(const std::vector<double>& eta, double target) {
  double lo = -20.0;
  double hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double e : eta) mean += sigmoid(mid + e);
    mean /= static_cast<double>(eta.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double GroundTruth::age_effect(double age) {
  const double rise = std::clamp((age - 18.0) / 12.0, 0.0, 1.0);
  const double late = std::clamp((age - 60.0) / 30.0, 0.0, 1.0);
  return 0.9 * rise + 0.5 * late - 0.45;
}

void SynthConfig::validate() const {
  if (n < 100) throw ConfigError("synth: n must be at least 100");
  if (months < 2) throw ConfigError("synth: months must be at least 2");
  for (double p : {prevalence_first_half, prevalence_second_half})
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("synth: prevalence target must lie in (0,1)");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("synth: missing_rate must lie in [0,1)");
  if (districts < static_cast<int>(kStates.size())) throw ConfigError("synth: need at least one district per state");
  if (tbus < districts) throw ConfigError("synth: need at least one TBU per district");
  if (phis < tbus) throw ConfigError("synth: need at least one PHI per TBU");
  if (noise_columns < 0 || noise_columns > static_cast<int>(kNoiseCardinality.size()))
    throw ConfigError("synth: noise_columns must be in [0,3]");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n", c.n},
          {"months", c.months},
          {"districts", c.districts},
          {"tbus", c.tbus},
          {"phis", c.phis},
          {"prevalence_first_half", c.prevalence_first_half},
          {"prevalence_second_half", c.prevalence_second_half},
          {"missing_rate", c.missing_rate},
          {"noise_columns", c.noise_columns},
          {"phi_name_signal", c.phi_name_signal},
          {"district_signal", c.district_signal}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n", c.n);
  get("months", c.months);
  get("districts", c.districts);
  get("tbus", c.tbus);
  get("phis", c.phis);
  get("prevalence_first_half", c.prevalence_first_half);
  get("prevalence_second_half", c.prevalence_second_half);
  get("missing_rate", c.missing_rate);
  get("noise_columns", c.noise_columns);
  get("phi_name_signal", c.phi_name_signal);
  get("district_signal", c.district_signal);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::array<const char*, 11> known{"n", "months", "districts", "tbus", "phis", "prevalence_first_half",
                                                  "prevalence_second_half", "missing_rate", "noise_columns",
                                                  "phi_name_signal", "district_signal"};
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end())
      throw ConfigError("synth: unknown setting '" + it.key() + "'");
  }
  return c;
}

nlohmann::json to_json(const GroundTruth& t) {
  nlohmann::json j;
  j["seed"] = t.seed;
  j["coefficients"] = t.coefficients;
  j["base_logit"] = t.base_logit;
  j["age_effect"] = "0.9*clamp((age-18)/12,0,1) + 0.5*clamp((age-60)/30,0,1) - 0.45";
  j["probability"] = std::vector<double>(t.probability.data(), t.probability.data() + t.probability.size());
  return j;
}

Schema synth_schema(const SynthConfig& config) {
  Schema s;
  s.columns.push_back({"EpisodeID", ColumnKind::id, false});
  s.columns.push_back({"Month", ColumnKind::timestamp, false});
  s.columns.push_back({"State", ColumnKind::categorical, true});
  s.columns.push_back({"District", ColumnKind::categorical, true});
  s.columns.push_back({"TBU", ColumnKind::categorical, true});
  s.columns.push_back({"PHI", ColumnKind::categorical, true});
  s.columns.push_back({"Age", ColumnKind::numeric, true});
  for (const auto& a : attributes()) s.columns.push_back({a.name, ColumnKind::categorical, true});
  for (int k = 0; k < config.noise_columns; ++k)
    s.columns.push_back({"Noise" + std::to_string(k + 1), ColumnKind::categorical, true});
  s.columns.push_back({"LFU", ColumnKind::label, false});
  return s;
}

Synthesized synthesize(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const Schema schema = synth_schema(config);
  Rng structure(splitmix64(seed ^ 0x5eedULL));
  GroundTruth truth;
  truth.seed = seed;

  // Geography: state -> district -> TBU -> PHI.
  const int D = config.districts;
  std::vector<int> district_state(static_cast<std::size_t>(D));
  std::vector<std::string> district_name(static_cast<std::size_t>(D));
  std::vector<double> district_weight(static_cast<std::size_t>(D));
  std::vector<std::vector<int>> state_districts(kStates.size());
  std::vector<int> per_state(kStates.size(), 0);
  auto& coef = truth.coefficients;
  for (int d = 0; d < D; ++d) {
    const auto s = static_cast<std::size_t>(d % static_cast<int>(kStates.size()));
    district_state[static_cast<std::size_t>(d)] = static_cast<int>(s);
    district_name[static_cast<std::size_t>(d)] = std::string(kStates[s].code) + "-D" + two_digits(++per_state[s]);
    district_weight[static_cast<std::size_t>(d)] = std::exp(0.5 * structure.normal());
    state_districts[s].push_back(d);
    coef["District"][district_name[static_cast<std::size_t>(d)]] = 0.45 * config.district_signal * structure.normal();
  }
  for (const auto& st : kStates) coef["State"][st.name] = st.effect;

  const int T = config.tbus;
  std::vector<int> tbu_district(static_cast<std::size_t>(T));
  std::vector<std::string> tbu_name(static_cast<std::size_t>(T));
  std::vector<int> per_district(static_cast<std::size_t>(D), 0);
  for (int t = 0; t < T; ++t) {
    const int d = t < D ? t : static_cast<int>(structure.below(static_cast<std::uint64_t>(D)));
    tbu_district[static_cast<std::size_t>(t)] = d;
    tbu_name[static_cast<std::size_t>(t)] =
        "TBU " + district_name[static_cast<std::size_t>(d)] + "/" + two_digits(++per_district[static_cast<std::size_t>(d)]);
    coef["TBU"][tbu_name[static_cast<std::size_t>(t)]] = 0.25 * structure.normal();
  }

  const int P = config.phis;
  std::vector<int> phi_tbu(static_cast<std::size_t>(P));
  std::vector<std::string> phi_name(static_cast<std::size_t>(P));
  std::vector<std::size_t> phi_kind(static_cast<std::size_t>(P));
  std::vector<std::vector<int>> district_phis(static_cast<std::size_t>(D));
  std::vector<std::vector<double>> district_phi_weight(static_cast<std::size_t>(D));
  for (int p = 0; p < P; ++p) {
    const int t = p < T ? p : static_cast<int>(structure.below(static_cast<std::uint64_t>(T)));
    const auto kind = structure.below(kFacilityKinds.size());
    phi_tbu[static_cast<std::size_t>(p)] = t;
    phi_kind[static_cast<std::size_t>(p)] = kind;
    phi_name[static_cast<std::size_t>(p)] = std::string(kFacilityKinds[kind].word) + " " + place_name(structure) + " " +
                                            std::to_string(100 + p);
    coef["PHI"][phi_name[static_cast<std::size_t>(p)]] =
        config.phi_name_signal * kFacilityKinds[kind].effect + 0.15 * structure.normal();
    const auto d = static_cast<std::size_t>(tbu_district[static_cast<std::size_t>(t)]);
    district_phis[d].push_back(p);
    district_phi_weight[d].push_back(std::exp(0.6 * structure.normal()));
  }

  auto attrs = attributes();
  for (const auto& a : attrs)
    for (std::size_t l = 0; l < a.levels.size(); ++l) coef[a.name][a.levels[l]] = a.effect[l];

  // Rows.
  const std::size_t n = config.n;
  std::vector<Column> cols(schema.columns.size());
  auto col_of = [&](std::string_view name) -> Column& { return cols[schema.index_of(name)]; };
  Column& episode = col_of("EpisodeID");
  Column& month = col_of("Month");
  Column& state = col_of("State");
  Column& district = col_of("District");
  Column& tbu = col_of("TBU");
  Column& phi = col_of("PHI");
  Column& age = col_of("Age");
  Column& label = col_of("LFU");

  for (const auto& st : kStates) state.dictionary.emplace_back(st.name);
  district.dictionary = district_name;
  tbu.dictionary = tbu_name;
  phi.dictionary = phi_name;
  for (const auto& a : attrs)
    for (auto* l : a.levels) col_of(a.name).dictionary.emplace_back(l);
  for (int k = 0; k < config.noise_columns; ++k) {
    auto& c = col_of("Noise" + std::to_string(k + 1));
    for (int v = 0; v < kNoiseCardinality[static_cast<std::size_t>(k)]; ++v)
      c.dictionary.push_back("n" + std::to_string(k + 1) + "_" + two_digits(v));
  }

  std::vector<double> state_weight;
  for (const auto& st : kStates) state_weight.push_back(st.weight);
  std::vector<std::vector<double>> state_district_weight(kStates.size());
  for (std::size_t s = 0; s < kStates.size(); ++s)
    for (int d : state_districts[s]) state_district_weight[s].push_back(district_weight[static_cast<std::size_t>(d)]);

  Rng rows(splitmix64(seed ^ 0x0fe11ULL));
  std::vector<double> eta(n);
  episode.dictionary.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = std::to_string(i);
    episode.dictionary.push_back("EP" + std::string(id.size() < 8 ? 8 - id.size() : 0, '0') + id);
    episode.codes.push_back(static_cast<std::int32_t>(i));
    month.codes.push_back(static_cast<std::int32_t>(rows.below(static_cast<std::uint64_t>(config.months))));

    const std::size_t s = rows.categorical(state_weight);
    const int d = state_districts[s][rows.categorical(state_district_weight[s])];
    const auto& cands = district_phis[static_cast<std::size_t>(d)];
    const int p = cands[rows.categorical(district_phi_weight[static_cast<std::size_t>(d)])];
    const int t = phi_tbu[static_cast<std::size_t>(p)];
    state.codes.push_back(static_cast<std::int32_t>(s));
    district.codes.push_back(d);
    tbu.codes.push_back(t);
    phi.codes.push_back(p);
    double e = kStates[s].effect + coef["District"][district_name[static_cast<std::size_t>(d)]] +
               coef["TBU"][tbu_name[static_cast<std::size_t>(t)]] + coef["PHI"][phi_name[static_cast<std::size_t>(p)]];

    const double a = std::round(std::clamp(38.0 + 16.0 * rows.normal(), 5.0, 90.0));
    age.values.push_back(a);
    e += GroundTruth::age_effect(a);

    for (const auto& attr : attrs) {
      std::size_t level;
      if (std::string_view(attr.name) == "PHIType") {
        const bool priv = kFacilityKinds[phi_kind[static_cast<std::size_t>(p)]].is_private;
        level = (rows.bernoulli(0.9) ? priv : !priv) ? 1 : 0;
      } else {
        level = rows.categorical(attr.freq);
      }
      col_of(attr.name).codes.push_back(static_cast<std::int32_t>(level));
      e += attr.effect[level];
    }
    for (int k = 0; k < config.noise_columns; ++k)
      col_of("Noise" + std::to_string(k + 1))
          .codes.push_back(static_cast<std::int32_t>(rows.below(static_cast<std::uint64_t>(kNoiseCardinality[static_cast<std::size_t>(k)]))));
    eta[i] = e;
  }

  // Base-logit schedule: one level per half-year, calibrated to its target.
  const int half = config.months / 2;
  std::vector<double> first, second;
  for (std::size_t i = 0; i < n; ++i) (month.codes[i] < half ? first : second).push_back(eta[i]);
  const double b1 = first.empty() ? logit(config.prevalence_first_half) : calibrate_base(first, config.prevalence_first_half);
  const double b2 = second.empty() ? logit(config.prevalence_second_half) : calibrate_base(second, config.prevalence_second_half);
  for (int m = 0; m < config.months; ++m) truth.base_logit.push_back(m < half ? b1 : b2);

  truth.probability.resize(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double pr = sigmoid(truth.base_logit[static_cast<std::size_t>(month.codes[i])] + eta[i]);
    truth.probability[static_cast<Index>(i)] = pr;
    label.codes.push_back(rows.bernoulli(pr) ? 1 : 0);
  }

  // Missing markers over feature cells, after labels are drawn.
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    if (!spec.is_feature()) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (!rows.bernoulli(config.missing_rate)) continue;
      if (spec.kind == ColumnKind::numeric) cols[c].values[i] = std::numeric_limits<double>::quiet_NaN();
      else cols[c].codes[i] = kMissingCode;
    }
  }

  return {Frame(schema, std::move(cols)), std::move(truth)};
}

}  // namespace lfu
