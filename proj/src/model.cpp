#include "lfu/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lfu {

namespace {

Vector resolve_weights(const Vector& weights, Index n) {
  if (weights.size() == 0) return Vector::Ones(n);
  if (weights.size() != n) throw DataError("weights: length mismatch");
  for (Index i = 0; i < n; ++i)
    if (!(weights(i) >= 0.0) || !std::isfinite(weights(i))) throw DataError("weights: must be finite and >= 0");
  return weights;
}

double weighted_base_rate(const Labels& y, const Vector& w) {
  ExactSum pos, tot;
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) == 1) pos.add(w(i));
    tot.add(w(i));
  }
  if (!(tot.value() > 0.0)) throw DataError("weights sum to zero");
  return pos.value() / tot.value();
}

void check_labels(const Labels& y) {
  for (Index i = 0; i < y.size(); ++i)
    if (y(i) != 0 && y(i) != 1) throw DataError("labels must be 0/1");
}

Model constant_model(double p, std::string warning) {
  Model m;
  m.body = ConstantModel{p};
  m.warnings.push_back(std::move(warning));
  return m;
}

// Leaf reached by a binned row; equals routing the raw value by threshold.
double predict_binned(const Tree& t, const BinnedMatrix& x, Index r) {
  const std::uint16_t* code = x.row(r);
  int i = 0;
  while (!t.nodes[static_cast<std::size_t>(i)].leaf()) {
    const auto& n = t.nodes[static_cast<std::size_t>(i)];
    i = x.threshold(n.feature, code[n.feature]) <= n.threshold ? n.left : n.right;
  }
  return t.nodes[static_cast<std::size_t>(i)].value;
}

double weighted_logloss(const Vector& margin, const Labels& y, const Vector& w) {
  double loss = 0.0, tot = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double z = margin(i);
    // log(1 + e^z) - y z, stable for large |z|
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += w(i) * (softplus - y(i) * z);
    tot += w(i);
  }
  return loss / tot;
}

}  // namespace

// --- rules ------------------------------------------------------------------

std::vector<Rule> builtin_rules() {
  const RuleCondition alcohol{"AlcoholIntake", {"present"}, std::nullopt};
  const RuleCondition hiv{"HIVStatus", {"positive"}, std::nullopt};
  const RuleCondition diabetes{"DiabetesStatus", {"positive"}, std::nullopt};
  const RuleCondition drtb{"TypeOfCase", {"DRTB"}, std::nullopt};
  const RuleCondition contacts{"HouseholdContacts", {"absent"}, std::nullopt};
  const double inf = std::numeric_limits<double>::infinity();
  return {
      {"rule1", {alcohol, hiv, diabetes}},
      {"rule2", {drtb, hiv, diabetes, {"Age", {}, std::pair{60.0, inf}}, contacts}},
      {"rule3",
       {{"Age", {}, std::pair{18.0, 45.0}},
        drtb,
        hiv,
        diabetes,
        {"Gender", {"M", "T"}, std::nullopt},
        {"Migrant", {"yes"}, std::nullopt},
        alcohol,
        contacts,
        {"MicrobiologicallyConfirmed", {"yes"}, std::nullopt},
        {"DiseaseSite", {"pulmonary"}, std::nullopt},
        {"UDSTDone", {"yes"}, std::nullopt},
        {"BankDetailsAdded", {"no"}, std::nullopt}}},
  };
}

const Rule& builtin_rule(int number) {
  static const std::vector<Rule> rules = builtin_rules();
  if (number < 1 || number > static_cast<int>(rules.size())) throw ConfigError("no built-in rule " + std::to_string(number));
  return rules[static_cast<std::size_t>(number - 1)];
}

Vector rule_score(const Rule& rule, const Frame& frame) {
  if (rule.conditions.empty()) throw ConfigError("rule " + rule.name + " has no conditions");
  Vector score = Vector::Zero(static_cast<Index>(frame.rows()));
  for (const auto& c : rule.conditions) {
    const auto col = frame.schema().find(c.feature);
    if (!col) throw DataError("rule " + rule.name + ": column " + c.feature + " not in frame");
    const auto kind = frame.schema().columns[*col].kind;
    const Column& column = frame.column(*col);
    if (c.interval) {
      if (kind != ColumnKind::numeric) throw ConfigError("rule " + rule.name + ": interval on non-numeric " + c.feature);
      const auto [lo, hi] = *c.interval;
      for (std::size_t i = 0; i < frame.rows(); ++i) {
        const double v = column.values[i];
        if (!std::isnan(v) && v >= lo && v <= hi) score(static_cast<Index>(i)) += 1.0;
      }
    } else {
      if (kind != ColumnKind::categorical) throw ConfigError("rule " + rule.name + ": category set on non-categorical " + c.feature);
      std::vector<char> hit(column.dictionary.size(), 0);
      for (std::size_t k = 0; k < column.dictionary.size(); ++k)
        hit[k] = std::find(c.categories.begin(), c.categories.end(), column.dictionary[k]) != c.categories.end();
      for (std::size_t i = 0; i < frame.rows(); ++i) {
        const auto code = column.codes[i];
        if (code >= 0 && hit[static_cast<std::size_t>(code)]) score(static_cast<Index>(i)) += 1.0;
      }
    }
  }
  return score / static_cast<double>(rule.conditions.size());
}

// --- boosted ----------------------------------------------------------------

nlohmann::json to_json(const BoostParams& p) {
  return {{"learning_rate", p.learning_rate},
          {"n_estimators", p.n_estimators},
          {"max_depth", p.max_depth},
          {"min_child_weight", p.min_child_weight},
          {"scale_pos_weight", p.scale_pos_weight},
          {"l1", p.l1},
          {"l2", p.l2},
          {"subsample", p.subsample},
          {"colsample", p.colsample},
          {"min_split_loss", p.min_split_loss},
          {"seed", p.seed},
          {"max_bins", p.max_bins}};
}

BoostParams boost_params_from_json(const nlohmann::json& j) {
  BoostParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") value.get_to(p.learning_rate);
    else if (key == "n_estimators") value.get_to(p.n_estimators);
    else if (key == "max_depth") value.get_to(p.max_depth);
    else if (key == "min_child_weight") value.get_to(p.min_child_weight);
    else if (key == "scale_pos_weight") value.get_to(p.scale_pos_weight);
    else if (key == "l1") value.get_to(p.l1);
    else if (key == "l2") value.get_to(p.l2);
    else if (key == "subsample") value.get_to(p.subsample);
    else if (key == "colsample") value.get_to(p.colsample);
    else if (key == "min_split_loss") value.get_to(p.min_split_loss);
    else if (key == "seed") value.get_to(p.seed);
    else if (key == "max_bins") value.get_to(p.max_bins);
    else throw ConfigError("boost params: unknown key " + key);
  }
  return p;
}

Vector BoostedModel::margin(const Eigen::Ref<const Matrix>& x) const {
  if (x.cols() != static_cast<Index>(feature_names.size()))
    throw DataError("boosted model expects " + std::to_string(feature_names.size()) + " features, got " +
                    std::to_string(x.cols()));
  Vector m = Vector::Constant(x.rows(), base_margin);
  for (const auto& t : trees)
    for (Index i = 0; i < x.rows(); ++i) m(i) += t.predict(x.data() + i, x.outerStride());
  return m;
}

NewtonStats newton_stats(const Vector& margin, const Labels& y, const Vector& weights, double scale_pos_weight) {
  NewtonStats s;
  const auto n = static_cast<std::size_t>(y.size());
  s.grad.resize(n);
  s.hess.resize(n);
  s.weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Index r = static_cast<Index>(i);
    const double p = sigmoid(margin(r));
    const double c = y(r) == 1 ? scale_pos_weight : 1.0;
    s.grad[i] = (p - y(r)) * c;
    s.hess[i] = p * (1.0 - p) * c;
    s.weight[i] = weights(r);
  }
  return s;
}

Model fit_boosted(const FeatureMatrix& x, const Labels& y, const Vector& weights, const BoostParams& params) {
  if (!x.values.allFinite()) throw DataError("fit_boosted: non-finite feature values");
  return fit_boosted(BinnedMatrix(x.values, params.max_bins), x.names, y, weights, params);
}

Model fit_boosted(const BinnedMatrix& x, const std::vector<std::string>& names, const Labels& y,
                  const Vector& weights, const BoostParams& params) {
  if (y.size() != x.rows()) throw DataError("fit_boosted: label length mismatch");
  if (static_cast<Index>(names.size()) != x.cols()) throw DataError("fit_boosted: feature name count mismatch");
  if (params.n_estimators < 0 || params.max_depth < 0) throw ConfigError("fit_boosted: negative size parameter");
  if (!(params.subsample > 0.0 && params.subsample <= 1.0)) throw ConfigError("fit_boosted: subsample outside (0,1]");
  if (!(params.colsample > 0.0 && params.colsample <= 1.0)) throw ConfigError("fit_boosted: colsample outside (0,1]");
  check_labels(y);
  const Vector w = resolve_weights(weights, y.size());
  const double p0 = weighted_base_rate(y, w);
  if (p0 <= 0.0 || p0 >= 1.0) return constant_model(p0, "degenerate labels: constant base-rate model");

  BoostedModel m;
  m.params = params;
  m.feature_names = names;
  m.base_margin = logit(p0);
  Vector margin = Vector::Constant(y.size(), m.base_margin);

  GrowOptions opt;
  opt.max_depth = params.max_depth;
  opt.criterion.kind = SplitCriterion::Kind::newton;
  opt.criterion.l1 = params.l1;
  opt.criterion.l2 = params.l2;
  opt.criterion.min_split_gain = params.min_split_loss;
  opt.criterion.min_child_b = params.min_child_weight;
  opt.criterion.leaf_scale = params.learning_rate;

  const auto n = static_cast<std::size_t>(y.size());
  const auto d = static_cast<int>(x.cols());
  const int ncols = std::max(1, static_cast<int>(std::lround(params.colsample * d)));
  std::vector<int> all_features(static_cast<std::size_t>(d));
  std::iota(all_features.begin(), all_features.end(), 0);

  for (int round = 0; round < params.n_estimators; ++round) {
    const auto stats = newton_stats(margin, y, w, params.scale_pos_weight);
    Rng rng(splitmix64(params.seed) ^ static_cast<std::uint64_t>(round));
    std::vector<std::uint32_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      if (params.subsample >= 1.0 || rng.bernoulli(params.subsample)) rows.push_back(static_cast<std::uint32_t>(i));
    std::vector<int> features = all_features;
    if (ncols < d) {
      rng.shuffle(features.begin(), features.end());
      features.resize(static_cast<std::size_t>(ncols));
      std::sort(features.begin(), features.end());
    }
    Tree t = grow_tree(x, stats.grad, stats.hess, std::move(rows), features, opt, stats.weight);
    for (std::size_t i = 0; i < n; ++i) margin(static_cast<Index>(i)) += predict_binned(t, x, static_cast<Index>(i));
    m.trees.push_back(std::move(t));
    m.loss_curve.push_back(weighted_logloss(margin, y, w));
  }
  Model out;
  out.body = std::move(m);
  return out;
}

// --- single tree ------------------------------------------------------------

Model fit_tree(const FeatureMatrix& x, const Labels& y, const Vector& weights, const TreeParams& params) {
  if (y.size() != x.rows()) throw DataError("fit_tree: label length mismatch");
  if (!x.values.allFinite()) throw DataError("fit_tree: non-finite feature values");
  check_labels(y);
  const Vector w = resolve_weights(weights, y.size());
  const double p0 = weighted_base_rate(y, w);
  if (p0 <= 0.0 || p0 >= 1.0) return constant_model(p0, "degenerate labels: constant base-rate model");

  const BinnedMatrix binned(x.values, params.max_bins);
  std::vector<double> a(static_cast<std::size_t>(y.size())), b(a.size());
  std::vector<double> rw(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = y(static_cast<Index>(i));
    b[i] = 1.0;
    rw[i] = w(static_cast<Index>(i));
  }
  std::vector<std::uint32_t> rows(a.size());
  std::iota(rows.begin(), rows.end(), 0u);
  std::vector<int> features(static_cast<std::size_t>(x.cols()));
  std::iota(features.begin(), features.end(), 0);
  GrowOptions opt;
  opt.max_depth = params.max_depth;
  opt.criterion.kind = SplitCriterion::Kind::gini;
  opt.criterion.min_child_b = params.min_leaf_weight;

  TreeModel m;
  m.tree = grow_tree(binned, a, b, std::move(rows), features, opt, rw);
  m.feature_names = x.names;
  m.params = params;
  Model out;
  out.body = std::move(m);
  return out;
}

// --- naive Bayes ------------------------------------------------------------

Model fit_naive_bayes(const Frame& frame, const Vector& weights, const NaiveBayesParams& params) {
  if (!(params.alpha > 0.0)) throw ConfigError("naive Bayes: alpha must be > 0");
  const Labels y = frame.labels();
  const Vector w = resolve_weights(weights, y.size());
  const double p0 = weighted_base_rate(y, w);
  if (p0 <= 0.0 || p0 >= 1.0) return constant_model(p0, "degenerate labels: constant base-rate model");

  NaiveBayesModel m;
  m.params = params;
  for (Index i = 0; i < y.size(); ++i) m.class_weight[static_cast<std::size_t>(y(i))] += w(i);
  const auto& schema = frame.schema();
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    const Column& col = frame.column(c);
    if (spec.kind == ColumnKind::categorical) {
      NaiveBayesModel::Categorical cat;
      cat.column = spec.name;
      std::vector<std::array<double, 2>> by_code(col.dictionary.size(), {0.0, 0.0});
      std::array<double, 2> missing{0.0, 0.0};
      bool any_missing = false;
      for (std::size_t i = 0; i < frame.rows(); ++i) {
        const auto r = static_cast<Index>(i);
        const auto code = col.codes[i];
        auto& slot = code < 0 ? missing : by_code[static_cast<std::size_t>(code)];
        any_missing |= code < 0;
        slot[static_cast<std::size_t>(y(r))] += w(r);
      }
      // Only categories present in these rows define the support.
      std::vector<bool> seen(col.dictionary.size(), false);
      for (auto code : col.codes)
        if (code >= 0) seen[static_cast<std::size_t>(code)] = true;
      for (std::size_t k = 0; k < col.dictionary.size(); ++k)
        if (seen[k]) cat.counts[col.dictionary[k]] = by_code[k];
      if (any_missing) cat.counts[std::string(kMissingToken)] = missing;
      m.categorical.push_back(std::move(cat));
    } else if (spec.kind == ColumnKind::numeric) {
      NaiveBayesModel::Gaussian g;
      g.column = spec.name;
      std::array<ExactSum, 2> sw, sv, sq;
      for (std::size_t i = 0; i < frame.rows(); ++i) {
        const double v = col.values[i];
        if (std::isnan(v)) continue;
        const auto k = static_cast<std::size_t>(y(static_cast<Index>(i)));
        sw[k].add(w(static_cast<Index>(i)));
        sv[k].add_product(w(static_cast<Index>(i)), v);
      }
      std::array<double, 2> total{sw[0].value(), sw[1].value()};
      for (std::size_t k = 0; k < 2; ++k) g.mean[k] = total[k] > 0.0 ? sv[k].value() / total[k] : 0.0;
      for (std::size_t i = 0; i < frame.rows(); ++i) {
        const double v = col.values[i];
        if (std::isnan(v)) continue;
        const auto k = static_cast<std::size_t>(y(static_cast<Index>(i)));
        sq[k].add_product(w(static_cast<Index>(i)), (v - g.mean[k]) * (v - g.mean[k]));
      }
      for (std::size_t k = 0; k < 2; ++k) g.var[k] = std::max(total[k] > 0.0 ? sq[k].value() / total[k] : 1.0, 1e-9);
      m.numeric.push_back(g);
    }
  }
  Model out;
  out.body = std::move(m);
  return out;
}

namespace {

Vector predict_nb(const NaiveBayesModel& m, const Frame& frame) {
  const auto n = static_cast<Index>(frame.rows());
  const double total = m.class_weight[0] + m.class_weight[1];
  Vector logit_score = Vector::Constant(n, std::log(m.class_weight[1] / total) - std::log(m.class_weight[0] / total));
  for (const auto& cat : m.categorical) {
    const auto col = frame.schema().find(cat.column);
    if (!col) throw DataError("naive Bayes: column " + cat.column + " not in frame");
    const Column& column = frame.column(*col);
    const double k = static_cast<double>(cat.counts.size());
    std::array<double, 2> totals{0.0, 0.0};
    for (const auto& [tok, c] : cat.counts) totals[0] += c[0], totals[1] += c[1];
    std::vector<double> by_code(column.dictionary.size(), std::numeric_limits<double>::quiet_NaN());
    auto contribution = [&](const std::array<double, 2>& c) {
      return std::log((c[1] + m.params.alpha) / (totals[1] + m.params.alpha * k)) -
             std::log((c[0] + m.params.alpha) / (totals[0] + m.params.alpha * k));
    };
    for (std::size_t code = 0; code < column.dictionary.size(); ++code) {
      const auto it = cat.counts.find(column.dictionary[code]);
      if (it != cat.counts.end()) by_code[code] = contribution(it->second);
    }
    const auto miss = cat.counts.find(std::string(kMissingToken));
    const double missing = miss == cat.counts.end() ? 0.0 : contribution(miss->second);
    for (Index i = 0; i < n; ++i) {
      const auto code = column.codes[static_cast<std::size_t>(i)];
      const double v = code < 0 ? missing : by_code[static_cast<std::size_t>(code)];
      if (!std::isnan(v)) logit_score(i) += v;  // unseen category: skipped
    }
  }
  for (const auto& g : m.numeric) {
    const auto col = frame.schema().find(g.column);
    if (!col) throw DataError("naive Bayes: column " + g.column + " not in frame");
    const Column& column = frame.column(*col);
    for (Index i = 0; i < n; ++i) {
      const double v = column.values[static_cast<std::size_t>(i)];
      if (std::isnan(v)) continue;
      auto log_density = [&](std::size_t k) {
        return -0.5 * std::log(g.var[k]) - 0.5 * (v - g.mean[k]) * (v - g.mean[k]) / g.var[k];
      };
      logit_score(i) += log_density(1) - log_density(0);
    }
  }
  return logit_score.unaryExpr([](double z) { return sigmoid(z); });
}

}  // namespace

// --- cyclic GAM -------------------------------------------------------------

namespace {

// Bin index per row for one shape; -1 means no contribution (unseen category).
std::vector<int> shape_bins(const GamModel::Shape& s, const Frame& frame) {
  const auto col = frame.schema().find(s.column);
  if (!col) throw DataError("GAM: column " + s.column + " not in frame");
  const Column& column = frame.column(*col);
  std::vector<int> bins(frame.rows());
  const int missing = static_cast<int>(s.values.size()) - 1;
  if (s.numeric) {
    for (std::size_t i = 0; i < frame.rows(); ++i) {
      const double v = column.values[i];
      if (std::isnan(v)) {
        bins[i] = missing;
        continue;
      }
      const auto b = std::lower_bound(s.edges.begin(), s.edges.end(), v) - s.edges.begin();
      bins[i] = std::min(static_cast<int>(b), missing - 1);
    }
  } else {
    std::vector<int> lookup(column.dictionary.size(), -1);
    for (std::size_t k = 0; k < column.dictionary.size(); ++k) {
      const auto it = std::lower_bound(s.categories.begin(), s.categories.end(), column.dictionary[k]);
      if (it != s.categories.end() && *it == column.dictionary[k]) lookup[k] = static_cast<int>(it - s.categories.begin());
    }
    for (std::size_t i = 0; i < frame.rows(); ++i) {
      const auto code = column.codes[i];
      bins[i] = code < 0 ? missing : lookup[static_cast<std::size_t>(code)];
    }
  }
  return bins;
}

}  // namespace

Matrix GamModel::contributions(const Frame& frame) const {
  Matrix c(static_cast<Index>(frame.rows()), static_cast<Index>(shapes.size()));
  for (std::size_t j = 0; j < shapes.size(); ++j) {
    const auto bins = shape_bins(shapes[j], frame);
    for (std::size_t i = 0; i < bins.size(); ++i)
      c(static_cast<Index>(i), static_cast<Index>(j)) = bins[i] < 0 ? 0.0 : shapes[j].values[static_cast<std::size_t>(bins[i])];
  }
  return c;
}

Model fit_cyclic_gam(const Frame& frame, const Vector& weights, const GamParams& params) {
  if (params.max_bins < 2 || params.max_bins > 64) throw ConfigError("GAM: max_bins must be in [2, 64]");
  if (params.rounds < 0) throw ConfigError("GAM: negative rounds");
  const Labels y = frame.labels();
  const Vector w = resolve_weights(weights, y.size());
  const double p0 = weighted_base_rate(y, w);
  if (p0 <= 0.0 || p0 >= 1.0) return constant_model(p0, "degenerate labels: constant base-rate model");

  GamModel m;
  m.params = params;
  m.intercept = logit(p0);
  const auto& schema = frame.schema();
  for (const auto& spec : schema.columns) {
    if (!spec.is_feature()) continue;
    GamModel::Shape s;
    s.column = spec.name;
    const Column& col = frame.column(spec.name);
    if (spec.kind == ColumnKind::numeric) {
      s.numeric = true;
      std::vector<double> v;
      for (double x : col.values)
        if (!std::isnan(x)) v.push_back(x);
      std::sort(v.begin(), v.end());
      std::vector<double> distinct;
      std::unique_copy(v.begin(), v.end(), std::back_inserter(distinct));
      if (distinct.size() <= params.max_bins) {
        s.edges = distinct;
      } else {
        for (std::size_t k = 1; k < params.max_bins; ++k) {
          const double q = v[k * v.size() / params.max_bins];
          if (s.edges.empty() || q > s.edges.back()) s.edges.push_back(q);
        }
        if (s.edges.back() < distinct.back()) s.edges.push_back(distinct.back());
      }
      s.values.assign(s.edges.size() + 1, 0.0);
    } else {
      std::vector<bool> seen(col.dictionary.size(), false);
      for (auto code : col.codes)
        if (code >= 0) seen[static_cast<std::size_t>(code)] = true;
      for (std::size_t k = 0; k < col.dictionary.size(); ++k)
        if (seen[k]) s.categories.push_back(col.dictionary[k]);
      std::sort(s.categories.begin(), s.categories.end());
      s.values.assign(s.categories.size() + 1, 0.0);
    }
    m.shapes.push_back(std::move(s));
  }

  const auto n = static_cast<std::size_t>(y.size());
  std::vector<std::vector<int>> bins;
  for (const auto& s : m.shapes) bins.push_back(shape_bins(s, frame));
  Vector margin = Vector::Constant(y.size(), m.intercept);

  std::vector<double> gsum, hsum;
  std::vector<std::size_t> order;
  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t j = 0; j < m.shapes.size(); ++j) {
      auto& s = m.shapes[j];
      const std::size_t nb = s.values.size();
      gsum.assign(nb, 0.0);
      hsum.assign(nb, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Index>(i);
        const double p = sigmoid(margin(r));
        const auto b = static_cast<std::size_t>(bins[j][i]);
        gsum[b] += (p - y(r)) * w(r);
        hsum[b] += p * (1.0 - p) * w(r);
      }
      order.resize(nb);
      std::iota(order.begin(), order.end(), std::size_t{0});
      if (!s.numeric) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return gsum[a] / (hsum[a] + params.l2) < gsum[b] / (hsum[b] + params.l2);
        });
      }
      const double gt = std::accumulate(gsum.begin(), gsum.end(), 0.0);
      const double ht = std::accumulate(hsum.begin(), hsum.end(), 0.0);
      const double parent = gt * gt / (ht + params.l2);
      double best = 0.0;
      std::size_t cut = nb;
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < nb; ++k) {
        gl += gsum[order[k]];
        hl += hsum[order[k]];
        const double gr = gt - gl, hr = ht - hl;
        if (hl < params.min_child_weight || hr < params.min_child_weight) continue;
        const double gain = gl * gl / (hl + params.l2) + gr * gr / (hr + params.l2) - parent;
        if (gain > best) {
          best = gain;
          cut = k;
        }
      }
      if (cut == nb) continue;
      gl = hl = 0.0;
      for (std::size_t k = 0; k <= cut; ++k) gl += gsum[order[k]], hl += hsum[order[k]];
      const double left = -params.learning_rate * gl / (hl + params.l2);
      const double right = -params.learning_rate * (gt - gl) / (ht - hl + params.l2);
      std::vector<double> delta(nb);
      for (std::size_t k = 0; k < nb; ++k) delta[order[k]] = k <= cut ? left : right;
      for (std::size_t k = 0; k < nb; ++k) s.values[k] += delta[k];
      for (std::size_t i = 0; i < n; ++i)
        if (bins[j][i] >= 0) margin(static_cast<Index>(i)) += delta[static_cast<std::size_t>(bins[j][i])];
    }
  }

  // Centre every shape on the training rows; the offset moves to the intercept.
  const double wt = w.sum();
  for (std::size_t j = 0; j < m.shapes.size(); ++j) {
    auto& s = m.shapes[j];
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += w(static_cast<Index>(i)) * s.values[static_cast<std::size_t>(bins[j][i])];
    mean /= wt;
    for (double& v : s.values) v -= mean;
    m.intercept += mean;
  }
  Model out;
  out.body = std::move(m);
  return out;
}

// --- dispatch ---------------------------------------------------------------

std::string_view to_string(Family f) {
  switch (f) {
    case Family::boosted: return "boosted";
    case Family::tree: return "tree";
    case Family::naive_bayes: return "naive-bayes";
    case Family::gam: return "gam";
    case Family::rule: return "rule";
    case Family::constant: return "constant";
  }
  return "?";
}

Family parse_family(std::string_view text) {
  for (Family f : {Family::boosted, Family::tree, Family::naive_bayes, Family::gam, Family::rule, Family::constant})
    if (to_string(f) == text) return f;
  throw ConfigError("unknown model family: " + std::string(text));
}

Family Model::family() const {
  switch (body.index()) {
    case 0: return Family::constant;
    case 1: return Family::boosted;
    case 2: return Family::tree;
    case 3: return Family::naive_bayes;
    case 4: return Family::gam;
    default: return Family::rule;
  }
}

bool Model::reads_frame() const {
  const Family f = family();
  return f == Family::naive_bayes || f == Family::gam || f == Family::rule || f == Family::constant;
}

Vector predict(const Model& model, const FeatureMatrix& x) {
  if (const auto* c = std::get_if<ConstantModel>(&model.body)) return Vector::Constant(x.rows(), c->score);
  if (const auto* b = std::get_if<BoostedModel>(&model.body))
    return b->margin(x.values).unaryExpr([](double z) { return sigmoid(z); });
  if (const auto* t = std::get_if<TreeModel>(&model.body)) {
    if (x.cols() != static_cast<Index>(t->feature_names.size())) throw DataError("tree model: dimension mismatch");
    Vector s(x.rows());
    for (Index i = 0; i < x.rows(); ++i) s(i) = t->tree.predict(x.values.data() + i, x.values.outerStride());
    return s;
  }
  throw DataError("model family " + std::string(to_string(model.family())) + " scores raw frames");
}

Vector predict(const Model& model, const Frame& frame) {
  const auto n = static_cast<Index>(frame.rows());
  if (const auto* c = std::get_if<ConstantModel>(&model.body)) return Vector::Constant(n, c->score);
  if (const auto* nb = std::get_if<NaiveBayesModel>(&model.body)) return predict_nb(*nb, frame);
  if (const auto* g = std::get_if<GamModel>(&model.body)) {
    const Matrix c = g->contributions(frame);
    Vector z = Vector::Constant(n, g->intercept);
    if (c.cols() > 0) z += c.rowwise().sum();
    return z.unaryExpr([](double v) { return sigmoid(v); });
  }
  if (const auto* r = std::get_if<RuleModel>(&model.body)) return rule_score(r->rule, frame);
  throw DataError("model family " + std::string(to_string(model.family())) + " needs an encoded matrix");
}

Vector ensemble_average(std::span<const Vector> scores) {
  if (scores.empty()) throw ConfigError("ensemble_average: empty list");
  Vector sum = Vector::Zero(scores.front().size());
  for (const auto& s : scores) {
    if (s.size() != sum.size()) throw DataError("ensemble_average: length mismatch");
    sum += s;
  }
  return sum / static_cast<double>(scores.size());
}

Vector Pipeline::predict(const Frame& frame) const {
  if (model.reads_frame()) return lfu::predict(model, frame);
  if (!encoder) throw ConfigError("pipeline " + name + ": model needs an encoder");
  return lfu::predict(model, transform(*encoder, frame));
}

Vector Ensemble::predict(const Frame& frame) const {
  std::vector<Vector> scores;
  for (const auto& m : members) scores.push_back(m.predict(frame));
  return ensemble_average(scores);
}

// --- serialization ----------------------------------------------------------

namespace {

nlohmann::json rule_json(const Rule& r) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : r.conditions) {
    nlohmann::json j{{"feature", c.feature}};
    if (c.interval) {
      auto bound = [](double v) { return std::isinf(v) ? nlohmann::json(v > 0 ? "inf" : "-inf") : nlohmann::json(v); };
      j["interval"] = {bound(c.interval->first), bound(c.interval->second)};
    } else {
      j["categories"] = c.categories;
    }
    conds.push_back(j);
  }
  return {{"name", r.name}, {"conditions", conds}};
}

Rule rule_from_json(const nlohmann::json& j) {
  Rule r;
  j.at("name").get_to(r.name);
  auto bound = [](const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                             : -std::numeric_limits<double>::infinity();
    return v.get<double>();
  };
  for (const auto& c : j.at("conditions")) {
    RuleCondition rc;
    c.at("feature").get_to(rc.feature);
    if (c.contains("interval")) rc.interval = std::pair{bound(c.at("interval")[0]), bound(c.at("interval")[1])};
    else c.at("categories").get_to(rc.categories);
    r.conditions.push_back(std::move(rc));
  }
  return r;
}

}  // namespace

nlohmann::json to_json(const Model& model) {
  nlohmann::json j{{"family", to_string(model.family())}, {"warnings", model.warnings}};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantModel>) {
          j["score"] = m.score;
        } else if constexpr (std::is_same_v<T, BoostedModel>) {
          j["base_margin"] = m.base_margin;
          j["features"] = m.feature_names;
          j["params"] = to_json(m.params);
          j["loss_curve"] = m.loss_curve;
          auto& trees = j["trees"] = nlohmann::json::array();
          for (const auto& t : m.trees) trees.push_back(to_json(t));
        } else if constexpr (std::is_same_v<T, TreeModel>) {
          j["features"] = m.feature_names;
          j["params"] = {{"max_depth", m.params.max_depth},
                         {"min_leaf_weight", m.params.min_leaf_weight},
                         {"max_bins", m.params.max_bins}};
          j["tree"] = to_json(m.tree);
        } else if constexpr (std::is_same_v<T, NaiveBayesModel>) {
          j["alpha"] = m.params.alpha;
          j["class_weight"] = m.class_weight;
          auto& cats = j["categorical"] = nlohmann::json::array();
          for (const auto& c : m.categorical) cats.push_back({{"column", c.column}, {"counts", c.counts}});
          auto& nums = j["numeric"] = nlohmann::json::array();
          for (const auto& g : m.numeric) nums.push_back({{"column", g.column}, {"mean", g.mean}, {"var", g.var}});
        } else if constexpr (std::is_same_v<T, GamModel>) {
          j["intercept"] = m.intercept;
          j["params"] = {{"learning_rate", m.params.learning_rate},
                         {"rounds", m.params.rounds},
                         {"max_bins", m.params.max_bins},
                         {"l2", m.params.l2},
                         {"min_child_weight", m.params.min_child_weight}};
          auto& shapes = j["shapes"] = nlohmann::json::array();
          for (const auto& s : m.shapes) {
            nlohmann::json sj{{"column", s.column}, {"numeric", s.numeric}, {"values", s.values}};
            if (s.numeric) sj["edges"] = s.edges;
            else sj["categories"] = s.categories;
            shapes.push_back(sj);
          }
        } else {
          j["rule"] = rule_json(m.rule);
        }
      },
      model.body);
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  Model model;
  j.at("warnings").get_to(model.warnings);
  switch (parse_family(j.at("family").get<std::string>())) {
    case Family::constant: model.body = ConstantModel{j.at("score").get<double>()}; break;
    case Family::boosted: {
      BoostedModel m;
      j.at("base_margin").get_to(m.base_margin);
      j.at("features").get_to(m.feature_names);
      m.params = boost_params_from_json(j.at("params"));
      j.at("loss_curve").get_to(m.loss_curve);
      for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
      model.body = std::move(m);
      break;
    }
    case Family::tree: {
      TreeModel m;
      j.at("features").get_to(m.feature_names);
      const auto& p = j.at("params");
      p.at("max_depth").get_to(m.params.max_depth);
      p.at("min_leaf_weight").get_to(m.params.min_leaf_weight);
      p.at("max_bins").get_to(m.params.max_bins);
      m.tree = tree_from_json(j.at("tree"));
      model.body = std::move(m);
      break;
    }
    case Family::naive_bayes: {
      NaiveBayesModel m;
      j.at("alpha").get_to(m.params.alpha);
      j.at("class_weight").get_to(m.class_weight);
      for (const auto& c : j.at("categorical")) {
        NaiveBayesModel::Categorical cat;
        c.at("column").get_to(cat.column);
        c.at("counts").get_to(cat.counts);
        m.categorical.push_back(std::move(cat));
      }
      for (const auto& g : j.at("numeric")) {
        NaiveBayesModel::Gaussian ga;
        g.at("column").get_to(ga.column);
        g.at("mean").get_to(ga.mean);
        g.at("var").get_to(ga.var);
        m.numeric.push_back(ga);
      }
      model.body = std::move(m);
      break;
    }
    case Family::gam: {
      GamModel m;
      j.at("intercept").get_to(m.intercept);
      const auto& p = j.at("params");
      p.at("learning_rate").get_to(m.params.learning_rate);
      p.at("rounds").get_to(m.params.rounds);
      p.at("max_bins").get_to(m.params.max_bins);
      p.at("l2").get_to(m.params.l2);
      p.at("min_child_weight").get_to(m.params.min_child_weight);
      for (const auto& sj : j.at("shapes")) {
        GamModel::Shape s;
        sj.at("column").get_to(s.column);
        sj.at("numeric").get_to(s.numeric);
        sj.at("values").get_to(s.values);
        if (s.numeric) sj.at("edges").get_to(s.edges);
        else sj.at("categories").get_to(s.categories);
        m.shapes.push_back(std::move(s));
      }
      model.body = std::move(m);
      break;
    }
    case Family::rule: model.body = RuleModel{rule_from_json(j.at("rule"))}; break;
  }
  return model;
}

nlohmann::json to_json(const Pipeline& p) {
  nlohmann::json j{{"name", p.name}, {"model", to_json(p.model)}};
  j["encoder"] = p.encoder ? to_json(*p.encoder) : nlohmann::json();
  return j;
}

Pipeline pipeline_from_json(const nlohmann::json& j) {
  Pipeline p;
  j.at("name").get_to(p.name);
  p.model = model_from_json(j.at("model"));
  if (!j.at("encoder").is_null()) p.encoder = encoder_from_json(j.at("encoder"));
  return p;
}

}  // namespace lfu
