#include "lfu/harness.hpp"

#include "lfu/metric.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lfu {

double global_threshold(const Vector& scores, double k) {
  if (scores.size() == 0) throw DataError("threshold: empty scores");
  const auto m = targeted_count(static_cast<std::size_t>(scores.size()), k);
  std::vector<double> v(scores.data(), scores.data() + scores.size());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m - 1), v.end(), std::greater<>());
  return v[m - 1];
}

std::map<std::string, double> local_thresholds(const Vector& scores, std::span<const std::string> cohorts, double k) {
  if (static_cast<Index>(cohorts.size()) != scores.size()) throw DataError("local thresholds: cohort length mismatch");
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t i = 0; i < cohorts.size(); ++i) groups[cohorts[i]].push_back(scores(static_cast<Index>(i)));
  std::map<std::string, double> out;
  for (const auto& [name, v] : groups)
    out[name] = global_threshold(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())), k);
  return out;
}

std::vector<std::string> cohort_ids(const Frame& frame, std::string_view column) {
  const auto col = frame.schema().find(column);
  if (!col) throw ConfigError("cohort column " + std::string(column) + " not in frame");
  const auto kind = frame.schema().columns[*col].kind;
  std::vector<std::string> ids(frame.rows());
  switch (kind) {
    case ColumnKind::categorical:
    case ColumnKind::id:
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::string(frame.token(*col, i));
      break;
    case ColumnKind::timestamp:
    case ColumnKind::label:
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::to_string(frame.column(*col).codes[i]);
      break;
    case ColumnKind::numeric: throw ConfigError("cohort column " + std::string(column) + " is numeric");
  }
  return ids;
}

CohortReport cohort_eval(const Frame& frame, const Vector& scores, std::string_view column, ThresholdMode mode,
                         double k, std::size_t replicates, std::uint64_t seed) {
  if (scores.size() != static_cast<Index>(frame.rows())) throw DataError("cohort_eval: score length mismatch");
  const auto ids = cohort_ids(frame, column);
  const Labels y = frame.labels();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[ids[i]].push_back(i);
  const double global = global_threshold(scores, k);
  const auto local = mode == ThresholdMode::local ? local_thresholds(scores, ids, k) : std::map<std::string, double>{};

  CohortReport report;
  report.column = std::string(column);
  report.mode = mode;
  report.k = k;
  std::uint64_t cohort_index = 0;
  for (const auto& [name, rows] : groups) {
    CohortRow r;
    r.cohort = name;
    r.n = rows.size();
    r.threshold = mode == ThresholdMode::global ? global : local.at(name);
    std::size_t targeted = 0, hits = 0;
    for (auto i : rows) {
      const bool top = scores(static_cast<Index>(i)) >= r.threshold;
      r.positives += static_cast<std::size_t>(y(static_cast<Index>(i)));
      targeted += top;
      hits += top && y(static_cast<Index>(i)) == 1;
    }
    r.effective_k = 100.0 * static_cast<double>(targeted) / static_cast<double>(r.n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.recall = r.positives > 0 ? static_cast<double>(hits) / static_cast<double>(r.positives) : nan;
    r.ci_lo = r.ci_hi = nan;
    if (r.positives > 0 && replicates > 0) {
      std::vector<double> reps;
      for (std::size_t b = 0; b < replicates; ++b) {
        Rng rng(splitmix64(seed ^ cohort_index) ^ static_cast<std::uint64_t>(b));
        std::size_t pos = 0, hit = 0;
        for (std::size_t t = 0; t < rows.size(); ++t) {
          const auto i = static_cast<Index>(rows[rng.below(rows.size())]);
          if (y(i) == 1) {
            ++pos;
            hit += scores(i) >= r.threshold;
          }
        }
        if (pos > 0) reps.push_back(static_cast<double>(hit) / static_cast<double>(pos));
      }
      if (reps.size() >= 30) {
        const auto ci = confidence_interval(reps);
        r.ci_lo = ci.lo;
        r.ci_hi = ci.hi;
      }
    }
    report.rows.push_back(r);
    ++cohort_index;
  }
  return report;
}

std::string cohort_csv(const CohortReport& report) {
  std::ostringstream out;
  out << "cohort,n,positives,threshold,effective_k,recall,ci_lo,ci_hi,mode\n";
  const char* mode = report.mode == ThresholdMode::global ? "global" : "local";
  for (const auto& r : report.rows)
    out << csv_escape(r.cohort) << ',' << r.n << ',' << r.positives << ',' << format_number(r.threshold) << ','
        << format_number(r.effective_k) << ',' << format_number(r.recall) << ',' << format_number(r.ci_lo) << ','
        << format_number(r.ci_hi) << ',' << mode << '\n';
  return out.str();
}

// --- search -----------------------------------------------------------------

namespace {

double log_uniform(Rng& rng, std::pair<double, double> range) {
  return std::exp(rng.uniform(std::log(range.first), std::log(range.second)));
}

}  // namespace

BoostParams SearchSpace::sample(Rng& rng) const {
  BoostParams p;
  p.learning_rate = log_uniform(rng, learning_rate);
  if (n_estimators.empty()) p.n_estimators = 50 * static_cast<int>(rng.integer(1, 40));
  else p.n_estimators = n_estimators[rng.below(n_estimators.size())];
  p.max_depth = static_cast<int>(rng.integer(max_depth.first, max_depth.second));
  p.min_child_weight = rng.uniform(min_child_weight.first, min_child_weight.second);
  p.scale_pos_weight = rng.uniform(scale_pos_weight.first, scale_pos_weight.second);
  p.l1 = log_uniform(rng, l1);
  p.l2 = rng.uniform(l2.first, l2.second);
  p.subsample = rng.uniform(subsample.first, subsample.second);
  p.colsample = rng.uniform(colsample.first, colsample.second);
  p.min_split_loss = static_cast<double>(rng.integer(min_split_loss.first, min_split_loss.second));
  p.max_bins = max_bins;
  return p;
}

nlohmann::json to_json(const SearchSpace& s) {
  return {{"learning_rate", s.learning_rate}, {"n_estimators", s.n_estimators},
          {"max_depth", s.max_depth},         {"min_child_weight", s.min_child_weight},
          {"scale_pos_weight", s.scale_pos_weight}, {"l1", s.l1},
          {"l2", s.l2},                       {"subsample", s.subsample},
          {"colsample", s.colsample},         {"min_split_loss", s.min_split_loss},
          {"max_bins", s.max_bins}};
}

SearchSpace search_space_from_json(const nlohmann::json& j) {
  SearchSpace s;
  for (const auto& [key, v] : j.items()) {
    if (key == "learning_rate") v.get_to(s.learning_rate);
    else if (key == "n_estimators") v.get_to(s.n_estimators);
    else if (key == "max_depth") v.get_to(s.max_depth);
    else if (key == "min_child_weight") v.get_to(s.min_child_weight);
    else if (key == "scale_pos_weight") v.get_to(s.scale_pos_weight);
    else if (key == "l1") v.get_to(s.l1);
    else if (key == "l2") v.get_to(s.l2);
    else if (key == "subsample") v.get_to(s.subsample);
    else if (key == "colsample") v.get_to(s.colsample);
    else if (key == "min_split_loss") v.get_to(s.min_split_loss);
    else if (key == "max_bins") v.get_to(s.max_bins);
    else throw ConfigError("search space: unknown key " + key);
  }
  auto positive = [](std::pair<double, double> r, const char* name) {
    if (!(r.first > 0.0 && r.first <= r.second)) throw ConfigError(std::string("search space: bad range ") + name);
  };
  positive(s.learning_rate, "learning_rate");
  positive(s.l1, "l1");
  if (s.max_depth.first < 0 || s.max_depth.first > s.max_depth.second) throw ConfigError("search space: bad range max_depth");
  return s;
}

SearchResult random_search(std::size_t budget, std::uint64_t seed, const std::function<nlohmann::json(Rng&)>& sampler,
                           const std::function<double(const nlohmann::json&, std::uint64_t)>& objective) {
  if (budget < 1) throw ConfigError("random search: budget must be >= 1");
  SearchResult result;
  result.trials.resize(budget);
  parallel_for(budget, [&](std::size_t t) {
    Trial& trial = result.trials[t];
    trial.index = t;
    trial.seed = seed ^ static_cast<std::uint64_t>(t);
    Rng rng(trial.seed);
    trial.params = sampler(rng);
    const double v = objective(trial.params, trial.seed);
    trial.objective = std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  });
  for (std::size_t t = 1; t < budget; ++t)
    if (result.trials[t].objective > result.trials[result.best].objective) result.best = t;
  return result;
}

SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const std::function<double(const BoostParams&)>& objective) {
  return random_search(
      budget, seed,
      [&](Rng& rng) {
        BoostParams p = space.sample(rng);
        return to_json(p);
      },
      [&](const nlohmann::json& j, std::uint64_t trial_seed) {
        BoostParams p = boost_params_from_json(j);
        p.seed = trial_seed;
        return objective(p);
      });
}

void write_trials_jsonl(const SearchResult& result, std::ostream& out) {
  for (const auto& t : result.trials) {
    const nlohmann::json j{{"trial", t.index}, {"seed", t.seed}, {"params", t.params}, {"objective", t.objective}};
    out << j.dump() << '\n';
  }
}

// --- selection --------------------------------------------------------------

namespace {

nlohmann::json sample_family(Family family, const SearchSpace& space, Rng& rng) {
  switch (family) {
    case Family::boosted: return to_json(space.sample(rng));
    case Family::tree: return {{"max_depth", rng.integer(2, 12)}, {"min_leaf_weight", log_uniform(rng, std::pair{1.0, 100.0})}};
    case Family::naive_bayes: return {{"alpha", log_uniform(rng, std::pair{0.1, 10.0})}};
    case Family::gam: return {{"learning_rate", log_uniform(rng, std::pair{0.01, 0.5})}, {"rounds", rng.integer(20, 200)}};
    case Family::rule: return {{"rule", rng.integer(1, 3)}};
    case Family::constant: return nlohmann::json::object();
  }
  return {};
}

bool needs_encoder(Family f) { return f == Family::boosted || f == Family::tree; }

}  // namespace

Pipeline fit_pipeline(Family family, const std::optional<EncoderKind>& encoder, const EncoderParams& encoder_params,
                      const nlohmann::json& params, const Frame& train, const Vector& weights) {
  Pipeline p;
  p.name = std::string(to_string(family));
  if (needs_encoder(family)) {
    if (!encoder) throw ConfigError("family " + p.name + " needs an encoder");
    auto fitted = fit_transform(*encoder, train, encoder_params);
    p.name += "+" + std::string(to_string(*encoder));
    const Labels y = train.labels();
    if (family == Family::boosted) {
      p.model = fit_boosted(fitted.train, y, weights, boost_params_from_json(params));
    } else {
      TreeParams tp;
      params.at("max_depth").get_to(tp.max_depth);
      params.at("min_leaf_weight").get_to(tp.min_leaf_weight);
      p.model = fit_tree(fitted.train, y, weights, tp);
    }
    p.encoder = std::move(fitted.encoder);
    return p;
  }
  switch (family) {
    case Family::naive_bayes: {
      NaiveBayesParams np;
      params.at("alpha").get_to(np.alpha);
      p.model = fit_naive_bayes(train, weights, np);
      break;
    }
    case Family::gam: {
      GamParams gp;
      params.at("learning_rate").get_to(gp.learning_rate);
      params.at("rounds").get_to(gp.rounds);
      p.model = fit_cyclic_gam(train, weights, gp);
      break;
    }
    case Family::rule: p.model.body = RuleModel{builtin_rule(params.at("rule").get<int>())}; break;
    default: {
      const Labels y = train.labels();
      p.model.body = ConstantModel{static_cast<double>(y.sum()) / static_cast<double>(y.size())};
      break;
    }
  }
  return p;
}

SelectionOutcome select_encoder_then_model(const Frame& modeling, const SelectionConfig& config) {
  if (modeling.partition() == "pes")
    throw ConfigError("leakage guard: passive-evaluation rows cannot be used for selection");
  if (config.encoders.empty()) throw ConfigError("selection: no encoders");
  if (config.families.empty()) throw ConfigError("selection: no model families");

  SelectionOutcome out;
  out.accessed.push_back(modeling.partition());
  const Partitions parts = chronological_partition(modeling, config.fractions);
  for (const Frame* f : {&parts.train, &parts.val, &parts.test}) out.accessed.push_back(f->partition());
  const Labels y_train = parts.train.labels();
  const Labels y_val = parts.val.labels();
  const Labels y_test = parts.test.labels();

  // Stage 1: boosted reference model under each encoder.
  for (std::size_t e = 0; e < config.encoders.size(); ++e) {
    const EncoderKind kind = config.encoders[e];
    auto fitted = fit_transform(kind, parts.train, config.encoder_params);
    const FeatureMatrix val = transform(fitted.encoder, parts.val);
    const FeatureMatrix test = transform(fitted.encoder, parts.test);
    const BinnedMatrix binned(fitted.train.values, config.space.max_bins);
    Candidate c;
    c.name = std::string(to_string(kind));
    c.search = random_search(config.space, config.budget, splitmix64(config.seed) ^ e, [&](const BoostParams& p) {
      const Model m = fit_boosted(binned, fitted.train.names, y_train, Vector(), p);
      return av_recall(predict(m, val), y_val);
    });
    const Trial& best = c.search.best_trial();
    BoostParams bp = boost_params_from_json(best.params);
    bp.seed = best.seed;
    c.params = to_json(bp);
    c.val_objective = best.objective;
    const Model m = fit_boosted(binned, fitted.train.names, y_train, Vector(), bp);
    c.test_scores = predict(m, test);
    c.test_objective = av_recall(c.test_scores, y_test);
    out.encoder_stage.push_back(std::move(c));
  }
  auto cd_of = [&](const std::vector<Candidate>& cands) {
    std::vector<Vector> scores;
    std::vector<std::string> names;
    for (const auto& c : cands) scores.push_back(c.test_scores), names.push_back(c.name);
    if (cands.size() < 2 || config.replicates < 10) {
      CDResult cd;
      cd.methods = names;
      cd.average_rank = Vector::Ones(static_cast<Index>(cands.size()));
      cd.raw_p = cd.adjusted_p = Matrix::Ones(static_cast<Index>(cands.size()), static_cast<Index>(cands.size()));
      cd.cliques.push_back({});
      for (std::size_t i = 0; i < cands.size(); ++i) cd.cliques.back().push_back(i);
      return cd;
    }
    const auto set = bootstrap_metric(scores, names, y_test, config.replicates, config.seed, metric_by_name("avrecall"));
    return friedman_cd(set);
  };
  auto argmax = [](const std::vector<Candidate>& cands) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
      if (cands[i].test_objective > cands[best].test_objective) best = i;
    return best;
  };
  out.encoder_cd = cd_of(out.encoder_stage);
  out.best_encoder = argmax(out.encoder_stage);
  const EncoderKind encoder = config.encoders[out.best_encoder];

  // Stage 2: every family under the chosen encoder.
  for (std::size_t f = 0; f < config.families.size(); ++f) {
    const Family family = config.families[f];
    if (family == Family::boosted) {
      Candidate c = out.encoder_stage[out.best_encoder];
      c.name = "boosted";
      out.model_stage.push_back(std::move(c));
      continue;
    }
    Candidate c;
    c.name = std::string(to_string(family));
    const std::size_t budget = family == Family::constant ? 1 : family == Family::rule ? std::min<std::size_t>(config.budget, 3)
                                                                                       : config.budget;
    c.search = random_search(
        budget, splitmix64(config.seed + 1) ^ f,
        [&](Rng& rng) {
          if (family == Family::rule) return nlohmann::json{{"rule", rng.integer(1, 3)}};
          return sample_family(family, config.space, rng);
        },
        [&](const nlohmann::json& params, std::uint64_t) {
          const Pipeline p = fit_pipeline(family, encoder, config.encoder_params, params, parts.train);
          return av_recall(p.predict(parts.val), y_val);
        });
    const Trial& best = c.search.best_trial();
    c.params = best.params;
    c.val_objective = best.objective;
    const Pipeline p = fit_pipeline(family, encoder, config.encoder_params, best.params, parts.train);
    c.test_scores = p.predict(parts.test);
    c.test_objective = av_recall(c.test_scores, y_test);
    out.model_stage.push_back(std::move(c));
  }
  out.model_cd = cd_of(out.model_stage);
  out.best_model = argmax(out.model_stage);

  // Stage 3: refit the winner on the whole modeling split.
  const Family family = config.families[out.best_model];
  out.final_pipeline =
      fit_pipeline(family, encoder, config.encoder_params, out.model_stage[out.best_model].params, modeling);
  return out;
}

}  // namespace lfu
