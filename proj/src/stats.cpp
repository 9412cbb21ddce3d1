#include "lfu/stats.hpp"

#include "lfu/metric.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace lfu {

MetricFn metric_by_name(std::string_view name) {
  auto parse_k = [&](std::string_view prefix) {
    const std::string rest(name.substr(prefix.size()));
    std::size_t used = 0;
    double k = 0.0;
    try {
      k = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != rest.size() || rest.empty()) throw ConfigError("metric: bad k in " + std::string(name));
    return k;
  };
  if (name.starts_with("recall@")) {
    const double k = parse_k("recall@");
    return [k](const Vector& s, const Labels& y) { return recall_at_k(s, y, k); };
  }
  if (name.starts_with("precision@")) {
    const double k = parse_k("precision@");
    return [k](const Vector& s, const Labels& y) { return precision_at_k(s, y, k); };
  }
  if (name == "avrecall") return [](const Vector& s, const Labels& y) { return av_recall(s, y); };
  if (name == "auc_roc") return [](const Vector& s, const Labels& y) { return auc_roc(s, y); };
  if (name == "auc_pr") return [](const Vector& s, const Labels& y) { return auc_pr(s, y); };
  throw ConfigError("unknown metric: " + std::string(name));
}

std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed, std::size_t b) {
  Rng rng(seed ^ static_cast<std::uint64_t>(b));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

BootstrapSet bootstrap_metric(std::span<const Vector> scores, std::span<const std::string> methods,
                              const Labels& labels, std::size_t replicates, std::uint64_t seed,
                              const MetricFn& metric) {
  if (replicates < 2) throw ConfigError("bootstrap: need at least 2 replicates");
  if (scores.empty()) throw ConfigError("bootstrap: no methods");
  if (scores.size() != methods.size()) throw ConfigError("bootstrap: method names do not match score vectors");
  for (const auto& s : scores)
    if (s.size() != labels.size()) throw DataError("bootstrap: every method must score the same rows");
  BootstrapSet set;
  set.methods.assign(methods.begin(), methods.end());
  set.seed = seed;
  set.replicates.resize(static_cast<Index>(replicates), static_cast<Index>(scores.size()));
  set.checksums.resize(replicates);
  const auto n = static_cast<std::size_t>(labels.size());
  parallel_for(replicates, [&](std::size_t b) {
    const auto idx = resample_indices(n, seed, b);
    std::uint64_t h = fnv1a("");
    for (auto i : idx) h = fnv1a(std::string_view(reinterpret_cast<const char*>(&i), sizeof i), h);
    set.checksums[b] = h;
    Labels y(static_cast<Index>(n));
    for (std::size_t t = 0; t < n; ++t) y(static_cast<Index>(t)) = labels(static_cast<Index>(idx[t]));
    Vector s(static_cast<Index>(n));
    for (std::size_t m = 0; m < scores.size(); ++m) {
      for (std::size_t t = 0; t < n; ++t) s(static_cast<Index>(t)) = scores[m](static_cast<Index>(idx[t]));
      set.replicates(static_cast<Index>(b), static_cast<Index>(m)) = metric(s, y);
    }
  });
  return set;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Interval confidence_interval(std::span<const double> replicates, double level) {
  if (replicates.size() < 30) throw ConfigError("confidence interval needs at least 30 replicates");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");
  const std::vector<double> v(replicates.begin(), replicates.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile(v, tail), quantile(v, 1.0 - tail)};
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

FriedmanResult friedman(const Matrix& blocks) {
  const Index b = blocks.rows();
  const Index k = blocks.cols();
  if (k < 2) throw ConfigError("friedman: need at least 2 methods");
  if (b < 10) throw ConfigError("friedman: need at least 10 blocks");
  Vector rank_sum = Vector::Zero(k);
  double tie_term = 0.0;
  std::vector<Index> order(static_cast<std::size_t>(k));
  for (Index r = 0; r < b; ++r) {
    std::iota(order.begin(), order.end(), Index{0});
    // Descending: the largest metric value gets rank 1.
    std::sort(order.begin(), order.end(), [&](Index x, Index y) { return blocks(r, x) > blocks(r, y); });
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && blocks(r, order[j]) == blocks(r, order[i])) ++j;
      const double mid = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t t = i; t < j; ++t) rank_sum(order[t]) += mid;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
  }
  FriedmanResult out;
  const double bd = static_cast<double>(b), kd = static_cast<double>(k);
  out.average_rank = rank_sum / bd;
  const double numer = 12.0 / (bd * kd * (kd + 1.0)) * rank_sum.squaredNorm() - 3.0 * bd * (kd + 1.0);
  const double denom = 1.0 - tie_term / (bd * kd * (kd * kd - 1.0));
  if (denom <= 1e-12) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  out.statistic = std::max(0.0, numer / denom);
  out.p_value = chi_square_sf(out.statistic, kd - 1.0);
  return out;
}

double wilcoxon_signed_rank(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DataError("wilcoxon: length mismatch");
  std::vector<double> d;
  for (Index i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) d.push_back(a(i) - b(i));
  const auto n = d.size();
  if (n == 0) return 1.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  double w_plus = 0.0, tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (d[order[t]] > 0) w_plus += mid;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double nd = static_cast<double>(n);
  const double mean = nd * (nd + 1.0) / 4.0;
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) return 1.0;
  const double z = (w_plus - mean) / std::sqrt(var);
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

std::vector<double> holm(std::span<const double> p_values) {
  const auto m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double v = std::min(1.0, static_cast<double>(m - i) * p_values[order[i]]);
    running = std::max(running, v);
    adjusted[order[i]] = running;
  }
  return adjusted;
}

CDResult friedman_cd(const BootstrapSet& set, double alpha) {
  const Matrix& r = set.replicates;
  const auto f = friedman(r);
  CDResult cd;
  cd.methods = set.methods;
  cd.average_rank = f.average_rank;
  cd.friedman_statistic = f.statistic;
  cd.friedman_p = f.p_value;
  cd.rejected = f.p_value < alpha;
  const Index k = r.cols();
  cd.raw_p = Matrix::Ones(k, k);
  cd.adjusted_p = Matrix::Ones(k, k);
  if (cd.rejected) {
    std::vector<double> raw;
    std::vector<std::pair<Index, Index>> pairs;
    for (Index i = 0; i < k; ++i)
      for (Index j = i + 1; j < k; ++j) {
        pairs.emplace_back(i, j);
        raw.push_back(wilcoxon_signed_rank(r.col(i), r.col(j)));
      }
    const auto adj = holm(raw);
    for (std::size_t t = 0; t < pairs.size(); ++t) {
      const auto [i, j] = pairs[t];
      cd.raw_p(i, j) = cd.raw_p(j, i) = raw[t];
      cd.adjusted_p(i, j) = cd.adjusted_p(j, i) = adj[t];
    }
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cd.average_rank(static_cast<Index>(a)) < cd.average_rank(static_cast<Index>(b));
  });
  std::size_t last_end = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::size_t end = i + 1;
    for (; end < order.size(); ++end) {
      bool ok = true;
      for (std::size_t t = i; t < end && ok; ++t)
        ok = cd.adjusted_p(static_cast<Index>(order[t]), static_cast<Index>(order[end])) > alpha;
      if (!ok) break;
    }
    if (end <= last_end) continue;  // contained in the previous group
    cd.cliques.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    last_end = end;
  }
  return cd;
}

std::string cd_csv(const CDResult& cd) {
  std::ostringstream out;
  out.precision(17);
  out << "method,avg_rank,clique_id\n";
  for (std::size_t c = 0; c < cd.cliques.size(); ++c)
    for (auto m : cd.cliques[c]) out << cd.methods[m] << ',' << cd.average_rank(static_cast<Index>(m)) << ',' << c << '\n';
  return out.str();
}

nlohmann::json to_json(const CDResult& cd) {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < cd.methods.size(); ++i)
    for (std::size_t j = i + 1; j < cd.methods.size(); ++j)
      pairs.push_back({{"a", cd.methods[i]},
                       {"b", cd.methods[j]},
                       {"p_raw", cd.raw_p(static_cast<Index>(i), static_cast<Index>(j))},
                       {"p_holm", cd.adjusted_p(static_cast<Index>(i), static_cast<Index>(j))}});
  std::vector<double> ranks(cd.average_rank.data(), cd.average_rank.data() + cd.average_rank.size());
  return {{"methods", cd.methods},  {"average_rank", ranks}, {"friedman_statistic", cd.friedman_statistic},
          {"friedman_p", cd.friedman_p}, {"rejected", cd.rejected}, {"pairs", pairs},
          {"cliques", cd.cliques}};
}

}  // namespace lfu
