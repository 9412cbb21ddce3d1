#include "lfu/encode.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lfu {

namespace {

double smoothed_mean(double sum, double count, double weight, double prior) {
  if (count <= 0.0 || count + weight <= 0.0) return prior;
  return (sum + weight * prior) / (count + weight);
}

bool scalar_kind(EncoderKind k) { return k != EncoderKind::similarity && k != EncoderKind::minhash; }

std::size_t column_dim(const Encoder& e, const ColumnEncoding& c) {
  if (c.numeric) return 1;
  if (e.kind == EncoderKind::similarity) return c.prototypes.size();
  if (e.kind == EncoderKind::minhash) return e.hash_seeds.size();
  return 1;
}

double random_code(std::uint64_t seed, std::string_view column, std::string_view token) {
  return static_cast<double>(splitmix64(seed ^ fnv1a(token, fnv1a(column)))) * 0x1.0p-64;
}

/// Writes the inference-time encoding of `token` into out[0..dim).
void encode_token(const Encoder& e, const ColumnEncoding& c, std::string_view token, double* out) {
  switch (e.kind) {
    case EncoderKind::similarity: {
      const Vector v = similarity_profile(token, c.prototypes);
      std::copy(v.data(), v.data() + v.size(), out);
      return;
    }
    case EncoderKind::minhash: {
      const Vector v = minhash_signature(token, e.hash_seeds);
      std::copy(v.data(), v.data() + v.size(), out);
      return;
    }
    case EncoderKind::random_code:
      out[0] = random_code(e.params.seed, c.column, token);
      return;
    default: {
      auto it = c.table.find(std::string(token));
      out[0] = it == c.table.end() ? c.fallback : it->second;
    }
  }
}

struct LabelStats {
  std::map<std::string, double> sums;
  std::map<std::string, double> counts;
};

LabelStats label_stats(const Frame& f, std::size_t col, const Labels& y) {
  LabelStats s;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    std::string tok(f.token(col, r));
    s.sums[tok] += y[static_cast<Index>(r)];
    s.counts[tok] += 1.0;
  }
  return s;
}

}  // namespace

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::count: return "count";
    case EncoderKind::target: return "target";
    case EncoderKind::loo: return "loo";
    case EncoderKind::ordered_target: return "ordered-target";
    case EncoderKind::prob_ratio: return "prob-ratio";
    case EncoderKind::odds_ratio: return "odds-ratio";
    case EncoderKind::log_odds: return "log-odds";
    case EncoderKind::similarity: return "similarity";
    case EncoderKind::minhash: return "minhash";
    case EncoderKind::random_code: return "random-code";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view text) {
  for (auto k : {EncoderKind::count, EncoderKind::target, EncoderKind::loo, EncoderKind::ordered_target,
                 EncoderKind::prob_ratio, EncoderKind::odds_ratio, EncoderKind::log_odds, EncoderKind::similarity,
                 EncoderKind::minhash, EncoderKind::random_code})
    if (to_string(k) == text) return k;
  if (text == "entity-embedding" || text == "gap")
    throw ConfigError("encoder kind '" + std::string(text) + "' is unsupported");
  throw ConfigError("unknown encoder kind '" + std::string(text) + "'");
}

bool uses_labels(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::count:
    case EncoderKind::similarity:
    case EncoderKind::minhash:
    case EncoderKind::random_code:
      return false;
    default:
      return true;
  }
}

// --- primitives -------------------------------------------------------------

std::set<std::string> trigrams(std::string_view value) {
  const std::string padded = "##" + std::string(value) + "##";
  std::set<std::string> grams;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.insert(padded.substr(i, 3));
  return grams;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t common = 0;
  for (const auto& g : a) common += b.count(g);
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
}

Vector similarity_profile(std::string_view value, const std::vector<std::string>& prototypes) {
  if (prototypes.empty()) throw InvariantError("similarity_profile: no prototypes");
  const auto grams = trigrams(value);
  Vector out(static_cast<Index>(prototypes.size()));
  for (std::size_t j = 0; j < prototypes.size(); ++j) out[static_cast<Index>(j)] = jaccard(grams, trigrams(prototypes[j]));
  return out;
}

std::vector<std::uint64_t> minhash_seeds(std::uint64_t seed, int dimension) {
  std::vector<std::uint64_t> seeds;
  for (int j = 0; j < dimension; ++j) seeds.push_back(splitmix64(seed + static_cast<std::uint64_t>(j) * 0x2545f4914f6cdd1dULL));
  return seeds;
}

Vector minhash_signature(std::string_view value, const std::vector<std::uint64_t>& hash_seeds) {
  if (hash_seeds.empty()) throw InvariantError("minhash_signature: no hashers");
  const auto grams = trigrams(value);
  std::vector<std::uint64_t> base;
  base.reserve(grams.size());
  for (const auto& g : grams) base.push_back(fnv1a(g));
  Vector out(static_cast<Index>(hash_seeds.size()));
  for (std::size_t j = 0; j < hash_seeds.size(); ++j) {
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    for (auto b : base) best = std::min(best, splitmix64(b ^ hash_seeds[j]));
    out[static_cast<Index>(j)] = static_cast<double>(best) * 0x1.0p-64;
  }
  return out;
}

double ratio_encode(EncoderKind kind, CategoryCounts c, CategoryCounts g) {
  const double pc = (c.positives + 1.0) / (c.positives + c.negatives + 2.0);
  const double pg = (g.positives + 1.0) / (g.positives + g.negatives + 2.0);
  const double odds_c = (c.positives + 1.0) / (c.negatives + 1.0);
  const double odds_g = (g.positives + 1.0) / (g.negatives + 1.0);
  switch (kind) {
    case EncoderKind::prob_ratio: return pc / pg;
    case EncoderKind::odds_ratio: return odds_c / odds_g;
    case EncoderKind::log_odds: return std::log(odds_c / odds_g);
    default: throw InvariantError("ratio_encode: not a ratio kind");
  }
}

// --- Encoder ----------------------------------------------------------------

std::size_t Encoder::dimension() const {
  std::size_t d = 0;
  for (const auto& c : columns) d += column_dim(*this, c);
  return d;
}

std::vector<std::string> Encoder::output_names() const {
  std::vector<std::string> names;
  for (const auto& c : columns) {
    const auto dim = column_dim(*this, c);
    if (dim == 1 && (c.numeric || scalar_kind(kind))) names.push_back(c.column);
    else
      for (std::size_t j = 0; j < dim; ++j) names.push_back(c.column + "#" + std::to_string(j));
  }
  return names;
}

Encoder fit_encoder(EncoderKind kind, const Frame& train, const EncoderParams& params) {
  if (train.rows() == 0) throw DataError("fit_encoder: empty training frame");
  const auto& schema = train.schema();
  bool any_categorical = false;
  for (const auto& c : schema.columns) any_categorical |= c.kind == ColumnKind::categorical;
  if (!any_categorical) throw DataError("fit_encoder: frame has no categorical column");

  Encoder e;
  e.kind = kind;
  e.params = params;
  e.train_rows = train.rows();
  const Labels y = train.labels();
  const double n = static_cast<double>(train.rows());
  const double positives = static_cast<double>(y.sum());
  e.prior = positives / n;
  if (kind == EncoderKind::minhash) e.hash_seeds = minhash_seeds(params.seed, params.minhash_dim);

  for (std::size_t col = 0; col < schema.columns.size(); ++col) {
    const auto& spec = schema.columns[col];
    if (!spec.is_feature()) continue;
    ColumnEncoding ce;
    ce.column = spec.name;
    if (spec.kind == ColumnKind::numeric) {
      ce.numeric = true;
      double sum = 0.0, cnt = 0.0;
      for (double v : train.column(col).values)
        if (!std::isnan(v)) sum += v, cnt += 1.0;
      ce.fill = cnt > 0 ? sum / cnt : 0.0;
      e.columns.push_back(std::move(ce));
      continue;
    }
    const LabelStats stats = label_stats(train, col, y);
    switch (kind) {
      case EncoderKind::count:
        for (const auto& [tok, cnt] : stats.counts) ce.table[tok] = cnt / n;
        ce.fallback = 0.0;
        break;
      case EncoderKind::target:
      case EncoderKind::loo:
        for (const auto& [tok, cnt] : stats.counts)
          ce.table[tok] = smoothed_mean(stats.sums.at(tok), cnt, params.smoothing, e.prior);
        ce.fallback = e.prior;
        if (kind == EncoderKind::loo) ce.sums = stats.sums, ce.counts = stats.counts;
        break;
      case EncoderKind::ordered_target:
        for (const auto& [tok, cnt] : stats.counts)
          ce.table[tok] = smoothed_mean(stats.sums.at(tok), cnt, params.prior_weight, e.prior);
        ce.fallback = e.prior;
        break;
      case EncoderKind::prob_ratio:
      case EncoderKind::odds_ratio:
      case EncoderKind::log_odds: {
        const CategoryCounts global{positives, n - positives};
        for (const auto& [tok, cnt] : stats.counts) {
          const double pos = stats.sums.at(tok);
          ce.table[tok] = ratio_encode(kind, {pos, cnt - pos}, global);
        }
        ce.fallback = kind == EncoderKind::log_odds ? 0.0 : 1.0;
        break;
      }
      case EncoderKind::similarity: {
        std::vector<std::pair<std::string, double>> freq(stats.counts.begin(), stats.counts.end());
        // Most frequent first; map order already gives lexicographic ties.
        std::stable_sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        const auto keep = std::min<std::size_t>(freq.size(), static_cast<std::size_t>(std::max(1, params.max_prototypes)));
        for (std::size_t j = 0; j < keep; ++j) ce.prototypes.push_back(freq[j].first);
        break;
      }
      case EncoderKind::minhash:
      case EncoderKind::random_code:
        break;
    }
    e.columns.push_back(std::move(ce));
  }
  return e;
}

FeatureMatrix transform(const Encoder& e, const Frame& frame) {
  FeatureMatrix out;
  out.names = e.output_names();
  out.values.resize(static_cast<Index>(frame.rows()), static_cast<Index>(out.names.size()));
  Index offset = 0;
  for (const auto& c : e.columns) {
    auto idx = frame.schema().find(c.column);
    if (!idx) throw DataError("transform: schema mismatch, column '" + c.column + "' absent");
    const auto& spec = frame.schema().columns[*idx];
    const auto& col = frame.column(*idx);
    if (c.numeric) {
      if (spec.kind != ColumnKind::numeric) throw DataError("transform: schema mismatch, '" + c.column + "' not numeric");
      for (std::size_t r = 0; r < frame.rows(); ++r) {
        const double v = col.values[r];
        out.values(static_cast<Index>(r), offset) = std::isnan(v) ? c.fill : v;
      }
      offset += 1;
      continue;
    }
    if (spec.kind != ColumnKind::categorical) throw DataError("transform: schema mismatch, '" + c.column + "' not categorical");
    const auto dim = static_cast<Index>(column_dim(e, c));
    // One encoding per dictionary entry plus the missing marker (last row).
    Matrix lut(static_cast<Index>(col.dictionary.size() + 1), dim);
    std::vector<double> buf(static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k <= col.dictionary.size(); ++k) {
      std::string_view tok = k < col.dictionary.size() ? std::string_view(col.dictionary[k]) : kMissingToken;
      encode_token(e, c, tok, buf.data());
      for (Index j = 0; j < dim; ++j) lut(static_cast<Index>(k), j) = buf[static_cast<std::size_t>(j)];
    }
    const auto missing_row = static_cast<Index>(col.dictionary.size());
    for (Index j = 0; j < dim; ++j) {
      auto dst = out.values.col(offset + j);
      for (std::size_t r = 0; r < frame.rows(); ++r) {
        const auto code = col.codes[r];
        dst[static_cast<Index>(r)] = lut(code == kMissingCode ? missing_row : code, j);
      }
    }
    offset += dim;
  }
  return out;
}

FittedEncoding fit_transform(EncoderKind kind, const Frame& train, const EncoderParams& params) {
  FittedEncoding fe{fit_encoder(kind, train, params), {}};
  fe.train = transform(fe.encoder, train);
  if (kind != EncoderKind::loo && kind != EncoderKind::ordered_target) return fe;

  const Labels y = train.labels();
  const double n = static_cast<double>(train.rows());
  const double total = static_cast<double>(y.sum());
  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), 0);
  if (kind == EncoderKind::ordered_target) {
    Rng rng(params.seed);
    rng.shuffle(order.begin(), order.end());
  }

  Index offset = 0;
  for (const auto& c : fe.encoder.columns) {
    if (c.numeric) {
      offset += 1;
      continue;
    }
    const std::size_t col = train.schema().index_of(c.column);
    auto dst = fe.train.values.col(offset);
    if (kind == EncoderKind::loo) {
      for (std::size_t r = 0; r < train.rows(); ++r) {
        const std::string tok(train.token(col, r));
        const double yi = y[static_cast<Index>(r)];
        const double prior = n > 1.0 ? (total - yi) / (n - 1.0) : fe.encoder.prior;
        dst[static_cast<Index>(r)] =
            smoothed_mean(c.sums.at(tok) - yi, c.counts.at(tok) - 1.0, params.smoothing, prior);
      }
    } else {
      std::map<std::string, std::pair<double, double>> running;
      for (auto r : order) {
        const std::string tok(train.token(col, r));
        auto& [sum, cnt] = running[tok];
        // The prior, like the history, leaves the row's own label out.
        const double yi = y[static_cast<Index>(r)];
        const double prior = n > 1.0 ? (total - yi) / (n - 1.0) : fe.encoder.prior;
        dst[static_cast<Index>(r)] =
            cnt + params.prior_weight > 0.0 ? (sum + params.prior_weight * prior) / (cnt + params.prior_weight) : prior;
        sum += y[static_cast<Index>(r)];
        cnt += 1.0;
      }
    }
    offset += 1;
  }
  return fe;
}

FittedEncoding ordered_target_encode(const Frame& train, std::uint64_t seed, double prior_weight) {
  EncoderParams p;
  p.seed = seed;
  p.prior_weight = prior_weight;
  return fit_transform(EncoderKind::ordered_target, train, p);
}

// --- JSON -------------------------------------------------------------------

nlohmann::json to_json(const Encoder& e) {
  nlohmann::json j;
  j["kind"] = to_string(e.kind);
  j["params"] = {{"smoothing", e.params.smoothing},
                 {"prior_weight", e.params.prior_weight},
                 {"max_prototypes", e.params.max_prototypes},
                 {"minhash_dim", e.params.minhash_dim},
                 {"seed", e.params.seed}};
  j["prior"] = e.prior;
  j["train_rows"] = e.train_rows;
  j["hash_seeds"] = e.hash_seeds;
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : e.columns) {
    nlohmann::json jc{{"column", c.column}, {"numeric", c.numeric}};
    if (c.numeric) jc["fill"] = c.fill;
    if (!c.table.empty()) jc["table"] = c.table, jc["fallback"] = c.fallback;
    if (!c.prototypes.empty()) jc["prototypes"] = c.prototypes;
    if (!c.sums.empty()) jc["sums"] = c.sums, jc["counts"] = c.counts;
    cols.push_back(std::move(jc));
  }
  j["columns"] = std::move(cols);
  return j;
}

Encoder encoder_from_json(const nlohmann::json& j) {
  Encoder e;
  e.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  const auto& p = j.at("params");
  p.at("smoothing").get_to(e.params.smoothing);
  p.at("prior_weight").get_to(e.params.prior_weight);
  p.at("max_prototypes").get_to(e.params.max_prototypes);
  p.at("minhash_dim").get_to(e.params.minhash_dim);
  p.at("seed").get_to(e.params.seed);
  j.at("prior").get_to(e.prior);
  j.at("train_rows").get_to(e.train_rows);
  j.at("hash_seeds").get_to(e.hash_seeds);
  for (const auto& jc : j.at("columns")) {
    ColumnEncoding c;
    jc.at("column").get_to(c.column);
    jc.at("numeric").get_to(c.numeric);
    if (jc.contains("fill")) jc.at("fill").get_to(c.fill);
    if (jc.contains("table")) jc.at("table").get_to(c.table), jc.at("fallback").get_to(c.fallback);
    if (jc.contains("prototypes")) jc.at("prototypes").get_to(c.prototypes);
    if (jc.contains("sums")) jc.at("sums").get_to(c.sums), jc.at("counts").get_to(c.counts);
    e.columns.push_back(std::move(c));
  }
  return e;
}

}  // namespace lfu
