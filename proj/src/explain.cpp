#include "lfu/explain.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lfu {

Frame permute_column(const Frame& frame, std::string_view column, std::uint64_t seed) {
  const auto idx = frame.schema().index_of(column);
  std::vector<std::size_t> perm(frame.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  const Column& src = frame.column(idx);
  Column out;
  out.dictionary = src.dictionary;
  if (frame.schema().columns[idx].kind == ColumnKind::numeric) {
    out.values.resize(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out.values[i] = src.values[perm[i]];
  } else {
    out.codes.resize(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out.codes[i] = src.codes[perm[i]];
  }
  return frame.with_column(column, std::move(out));
}

ImportanceReport pfi(const Scorer& scorer, const Frame& frame, const MetricFn& metric, std::string metric_name,
                     int repeats, std::uint64_t seed, std::vector<std::string> features) {
  if (repeats < 1) throw ConfigError("pfi: repeats must be >= 1");
  if (features.empty()) features = frame.schema().feature_names();
  const Labels y = frame.labels();
  ImportanceReport report;
  report.metric = std::move(metric_name);
  report.repeats = repeats;
  report.seed = seed;
  report.baseline = metric(scorer(frame), y);
  const auto r = static_cast<std::size_t>(repeats);
  std::vector<double> drops(features.size() * r);
  parallel_for(drops.size(), [&](std::size_t t) {
    const std::size_t j = t / r, rep = t % r;
    const Frame permuted = permute_column(frame, features[j], splitmix64(seed ^ j) ^ rep);
    drops[t] = report.baseline - metric(scorer(permuted), y);
  });
  for (std::size_t j = 0; j < features.size(); ++j) {
    Importance imp;
    imp.feature = features[j];
    double sum = 0.0;
    for (std::size_t k = 0; k < r; ++k) sum += drops[j * r + k];
    imp.mean = sum / static_cast<double>(r);
    double ss = 0.0;
    for (std::size_t k = 0; k < r; ++k) ss += (drops[j * r + k] - imp.mean) * (drops[j * r + k] - imp.mean);
    imp.std = r > 1 ? std::sqrt(ss / static_cast<double>(r - 1)) : 0.0;
    report.features.push_back(imp);
  }
  return report;
}

double permuted_metric(const Scorer& scorer, const Frame& frame, const MetricFn& metric,
                       std::span<const std::string> features, std::uint64_t seed) {
  Frame f = frame;
  for (std::size_t j = 0; j < features.size(); ++j) f = permute_column(f, features[j], splitmix64(seed ^ j));
  return metric(scorer(f), frame.labels());
}

ALECurve ale(const Scorer& scorer, const Frame& frame, std::string_view feature, int bins) {
  if (bins < 1) throw ConfigError("ale: bins must be >= 1");
  const auto idx = frame.schema().index_of(feature);
  if (frame.schema().columns[idx].kind != ColumnKind::numeric)
    throw ConfigError("ale: feature " + std::string(feature) + " is not numeric");
  const Column& col = frame.column(idx);
  std::vector<std::size_t> rows;
  std::vector<double> v;
  for (std::size_t i = 0; i < frame.rows(); ++i)
    if (!std::isnan(col.values[i])) rows.push_back(i), v.push_back(col.values[i]);
  if (v.empty()) throw DataError("ale: feature " + std::string(feature) + " is entirely missing");
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw DataError("ale: feature " + std::string(feature) + " is constant");

  ALECurve c;
  c.feature = std::string(feature);
  for (int q = 0; q <= bins; ++q) {
    const double e = quantile(sorted, static_cast<double>(q) / bins);
    if (c.edges.empty() || e > c.edges.back()) c.edges.push_back(e);
  }
  const std::size_t nb = c.edges.size() - 1;
  std::vector<std::size_t> bin(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto it = std::lower_bound(c.edges.begin() + 1, c.edges.end(), v[i]);
    bin[i] = std::min<std::size_t>(static_cast<std::size_t>(it - (c.edges.begin() + 1)), nb - 1);
  }
  const Frame base = frame.take(rows);
  Column lower, upper;
  lower.values.resize(rows.size());
  upper.values.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lower.values[i] = c.edges[bin[i]];
    upper.values[i] = c.edges[bin[i] + 1];
  }
  const Vector lo = scorer(base.with_column(feature, std::move(lower)));
  const Vector hi = scorer(base.with_column(feature, std::move(upper)));
  c.counts.assign(nb, 0);
  c.local.assign(nb, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    c.counts[bin[i]] += 1;
    c.local[bin[i]] += hi(static_cast<Index>(i)) - lo(static_cast<Index>(i));
  }
  double running = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < nb; ++k) {
    if (c.counts[k] > 0) c.local[k] /= static_cast<double>(c.counts[k]);
    running += c.local[k];
    c.accumulated.push_back(running);
    weighted += static_cast<double>(c.counts[k]) * running;
  }
  c.centering = weighted / static_cast<double>(rows.size());
  for (double a : c.accumulated) c.centered.push_back(a - c.centering);
  return c;
}

SurrogateResult local_surrogate(const Scorer& scorer, const Frame& train, const Frame& record, std::size_t samples,
                                double width, std::uint64_t seed) {
  if (record.rows() != 1) throw ConfigError("local surrogate: record must be a single row");
  if (samples < 2) throw ConfigError("local surrogate: need at least 2 samples");
  if (!(record.schema() == train.schema())) throw DataError("local surrogate: record schema differs from training");
  const auto& schema = train.schema();
  std::vector<std::size_t> feats;
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    if (schema.columns[c].is_feature()) feats.push_back(c);
  const std::size_t d = feats.size();
  if (d == 0) throw DataError("local surrogate: no features");
  if (train.rows() == 0) throw DataError("local surrogate: empty training frame");
  SurrogateResult out;
  out.width = width > 0.0 ? width : 0.75 * std::sqrt(static_cast<double>(d));

  const std::vector<std::size_t> rep(samples, 0);
  Frame perturbed = record.take(rep);
  Matrix z(static_cast<Index>(samples), static_cast<Index>(d) + 1);
  z.col(0).setOnes();
  Vector dist2 = Vector::Zero(static_cast<Index>(samples));
  Rng rng(seed);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t c = feats[j];
    const auto& spec = schema.columns[c];
    const Column& src = train.column(c);
    Column col;
    if (spec.kind == ColumnKind::numeric) {
      double sum = 0.0, ss = 0.0;
      std::size_t cnt = 0;
      for (double v : src.values)
        if (!std::isnan(v)) sum += v, ++cnt;
      const double mean = cnt ? sum / static_cast<double>(cnt) : 0.0;
      for (double v : src.values)
        if (!std::isnan(v)) ss += (v - mean) * (v - mean);
      const double sd = cnt > 1 ? std::sqrt(ss / static_cast<double>(cnt - 1)) : 0.0;
      double x0 = record.column(c).values[0];
      if (std::isnan(x0)) x0 = mean;
      col.values.resize(samples);
      for (std::size_t s = 0; s < samples; ++s) {
        const double x = s == 0 ? x0 : x0 + sd * rng.normal();
        col.values[s] = x;
        z(static_cast<Index>(s), static_cast<Index>(j) + 1) = x;
        if (sd > 0.0) dist2(static_cast<Index>(s)) += (x - x0) * (x - x0) / (sd * sd);
      }
      names.push_back(spec.name);
    } else {
      const std::string token(record.token(c, 0));
      col.dictionary = src.dictionary;
      col.codes.resize(samples);
      for (std::size_t s = 0; s < samples; ++s) {
        std::int32_t code;
        if (s == 0) {
          const auto it = std::find(col.dictionary.begin(), col.dictionary.end(), token);
          if (record.column(c).codes[0] < 0) code = kMissingCode;
          else if (it != col.dictionary.end()) code = static_cast<std::int32_t>(it - col.dictionary.begin());
          else code = col.intern(token);
        } else {
          code = src.codes[rng.below(src.codes.size())];
        }
        col.codes[s] = code;
        const std::string_view tok = code < 0 ? kMissingToken : std::string_view(col.dictionary[static_cast<std::size_t>(code)]);
        const bool same = tok == token;
        z(static_cast<Index>(s), static_cast<Index>(j) + 1) = same ? 1.0 : 0.0;
        if (!same) dist2(static_cast<Index>(s)) += 1.0;
      }
      names.push_back(spec.name + "=" + token);
    }
    perturbed = perturbed.with_column(spec.name, std::move(col));
  }
  const Vector y = scorer(perturbed);
  const Vector w = (-dist2.array() / (out.width * out.width)).exp();
  const Vector sw = w.array().sqrt();
  const Matrix a = sw.asDiagonal() * z;
  const Vector b = sw.asDiagonal() * y;
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  Vector beta;
  if (qr.rank() == a.cols()) {
    beta = qr.solve(b);
  } else {
    out.ridge = true;
    Matrix gram = a.transpose() * a;
    const double load = 1e-6 * std::max(1.0, gram.diagonal().mean());
    gram.diagonal().array() += load;
    beta = gram.ldlt().solve(a.transpose() * b);
  }
  out.intercept = beta(0);
  for (std::size_t j = 0; j < d; ++j) out.weights.emplace_back(names[j], beta(static_cast<Index>(j) + 1));
  const Vector fitted = z * beta;
  const double ybar = (w.array() * y.array()).sum() / w.sum();
  const double ss_res = (w.array() * (y - fitted).array().square()).sum();
  const double ss_tot = (w.array() * (y.array() - ybar).square()).sum();
  out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return out;
}

nlohmann::json to_json(const ImportanceReport& r) {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& i : r.features) f.push_back({{"feature", i.feature}, {"mean", i.mean}, {"std", i.std}});
  return {{"metric", r.metric}, {"repeats", r.repeats}, {"seed", r.seed}, {"baseline", r.baseline}, {"features", f}};
}

nlohmann::json to_json(const ALECurve& c) {
  return {{"feature", c.feature}, {"edges", c.edges},     {"counts", c.counts},     {"local", c.local},
          {"accumulated", c.accumulated}, {"centering", c.centering}, {"centered", c.centered}};
}

nlohmann::json to_json(const SurrogateResult& s) {
  nlohmann::json w = nlohmann::json::object();
  for (const auto& [name, v] : s.weights) w[name] = v;
  return {{"intercept", s.intercept}, {"weights", w}, {"r2", s.r2}, {"width", s.width}, {"ridge", s.ridge}};
}

std::string importance_csv(const ImportanceReport& r) {
  std::ostringstream out;
  out << "feature,importance,std,metric,repeats\n";
  for (const auto& i : r.features)
    out << csv_escape(i.feature) << ',' << format_number(i.mean) << ',' << format_number(i.std) << ',' << r.metric
        << ',' << r.repeats << '\n';
  return out.str();
}

std::string ale_csv(const ALECurve& c) {
  std::ostringstream out;
  out << "feature,bin,lower,upper,count,local,accumulated,centered\n";
  for (std::size_t k = 0; k < c.counts.size(); ++k)
    out << csv_escape(c.feature) << ',' << k << ',' << format_number(c.edges[k]) << ',' << format_number(c.edges[k + 1])
        << ',' << c.counts[k] << ',' << format_number(c.local[k]) << ',' << format_number(c.accumulated[k]) << ','
        << format_number(c.centered[k]) << '\n';
  return out.str();
}

}  // namespace lfu
