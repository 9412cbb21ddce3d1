#pragma once

#include "lfu/frame.hpp"

#include <map>
#include <set>

namespace lfu {

enum class EncoderKind {
  count,
  target,
  loo,
  ordered_target,
  prob_ratio,
  odds_ratio,
  log_odds,
  similarity,
  minhash,
  /// Label-free control: a seeded pseudo-random code per category.
  random_code,
};

std::string_view to_string(EncoderKind kind);
/// Throws ConfigError; "entity-embedding" and "gap" are reserved and unsupported.
EncoderKind parse_encoder_kind(std::string_view text);
bool uses_labels(EncoderKind kind);

struct EncoderParams {
  /// Target-family smoothing m (prior weight for target/loo).
  double smoothing = 20.0;
  /// Prior weight a of the ordered (CatBoost-style) encoder.
  double prior_weight = 1.0;
  int max_prototypes = 30;
  int minhash_dim = 30;
  std::uint64_t seed = 0;
};

/// Encoded design matrix (no missing, finite entries).
struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> names;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Fitted per-column state.
struct ColumnEncoding {
  std::string column;
  bool numeric = false;
  double fill = 0.0;                     // numeric: training mean
  std::map<std::string, double> table;   // scalar kinds: token -> value
  double fallback = 0.0;                 // scalar kinds: unseen token
  std::vector<std::string> prototypes;   // similarity
  std::map<std::string, double> sums;    // loo / ordered: label sums
  std::map<std::string, double> counts;  // loo / ordered: row counts
};

struct Encoder {
  EncoderKind kind = EncoderKind::count;
  EncoderParams params;
  double prior = 0.0;
  std::size_t train_rows = 0;
  std::vector<ColumnEncoding> columns;
  std::vector<std::uint64_t> hash_seeds;  // minhash

  std::size_t dimension() const;
  std::vector<std::string> output_names() const;
};

Encoder fit_encoder(EncoderKind kind, const Frame& train, const EncoderParams& params = {});
/// Inference-time transform (full training statistics for every kind).
FeatureMatrix transform(const Encoder& encoder, const Frame& frame);

struct FittedEncoding {
  Encoder encoder;
  FeatureMatrix train;
};

/// Fit plus the training-time matrix. Leave-one-out and ordered kinds encode
/// each training row without its own label; other kinds equal transform().
FittedEncoding fit_transform(EncoderKind kind, const Frame& train, const EncoderParams& params = {});

/// Ordered target statistics over a seeded permutation of the rows.
FittedEncoding ordered_target_encode(const Frame& train, std::uint64_t seed, double prior_weight);

// --- primitives -------------------------------------------------------------

/// Character 3-grams of the value padded with two '#' on each side.
std::set<std::string> trigrams(std::string_view value);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);
Vector similarity_profile(std::string_view value, const std::vector<std::string>& prototypes);
/// hasher_j(g) = splitmix64(fnv1a(g) ^ seed_j) * 2^-64, minimised over 3-grams.
Vector minhash_signature(std::string_view value, const std::vector<std::uint64_t>& hash_seeds);
std::vector<std::uint64_t> minhash_seeds(std::uint64_t seed, int dimension);

struct CategoryCounts {
  double positives = 0.0;
  double negatives = 0.0;
};

/// Laplace-smoothed ratio encodings (kind in {prob_ratio, odds_ratio, log_odds}).
double ratio_encode(EncoderKind kind, CategoryCounts category, CategoryCounts global);

nlohmann::json to_json(const Encoder& encoder);
Encoder encoder_from_json(const nlohmann::json& j);

}  // namespace lfu
