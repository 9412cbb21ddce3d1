#include "lfu/encode.hpp"

#include "support.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using namespace lfu;
using lfu::test::frame_from;

namespace {

/// Frame with city tokens and labels; age constant.
Frame cities(const std::vector<std::string>& tokens, const std::vector<int>& y) {
  std::string csv = "id,month,city,age,y\n";
  for (std::size_t i = 0; i < tokens.size(); ++i)
    csv += "r" + std::to_string(i) + ",0," + tokens[i] + ",30," + std::to_string(y[i]) + "\n";
  return frame_from(csv);
}

double city_value(const FeatureMatrix& m, std::size_t row) { return m.values(static_cast<Index>(row), 0); }

// Brute-force 3-grams: every window of the string padded with two '#' per side.
std::set<std::string> grams_by_hand(const std::string& s) {
  const std::string p = "##" + s + "##";
  std::set<std::string> out;
  for (std::size_t i = 0; i + 2 < p.size(); ++i) out.insert(std::string{p[i], p[i + 1], p[i + 2]});
  return out;
}

double jaccard_by_hand(const std::string& a, const std::string& b) {
  const auto ga = grams_by_hand(a), gb = grams_by_hand(b);
  std::set<std::string> uni = ga, inter;
  uni.insert(gb.begin(), gb.end());
  for (const auto& g : ga)
    if (gb.count(g)) inter.insert(g);
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

Frame random_frame(Rng& rng, std::size_t n) {
  std::vector<std::string> tokens;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    tokens.push_back("c" + std::to_string(rng.below(6)));
    y.push_back(rng.bernoulli(0.3) ? 1 : 0);
  }
  return cities(tokens, y);
}

Frame flip_label(const Frame& f, std::size_t row) {
  Column y = f.column("y");
  y.codes[row] = 1 - y.codes[row];
  return f.with_column("y", y);
}

const std::vector<EncoderKind> kAllKinds{EncoderKind::count,      EncoderKind::target,     EncoderKind::loo,
                                         EncoderKind::ordered_target, EncoderKind::prob_ratio, EncoderKind::odds_ratio,
                                         EncoderKind::log_odds,   EncoderKind::similarity, EncoderKind::minhash,
                                         EncoderKind::random_code};

}  // namespace

TEST_CASE("count encoding is category frequency") {
  const Frame f = cities({"a", "a", "b"}, {0, 1, 0});
  const auto m = transform(fit_encoder(EncoderKind::count, f), f);
  CHECK(city_value(m, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(city_value(m, 2) == doctest::Approx(1.0 / 3.0));
  CHECK(m.values(0, 1) == 30.0);
}

TEST_CASE("target encoding without smoothing is the category mean") {
  EncoderParams p;
  p.smoothing = 0.0;
  const Frame f = cities({"a", "a", "b"}, {1, 0, 1});
  const Encoder e = fit_encoder(EncoderKind::target, f, p);
  CHECK(city_value(transform(e, f), 0) == doctest::Approx(0.5));
  const Frame unseen = cities({"zzz"}, {0});
  CHECK(city_value(transform(e, unseen), 0) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("similarity with a single category is one prototype at 1") {
  const Frame f = cities({"only", "only", "only"}, {0, 1, 0});
  const Encoder e = fit_encoder(EncoderKind::similarity, f);
  REQUIRE(e.columns[0].prototypes == std::vector<std::string>{"only"});
  const auto m = transform(e, f);
  CHECK(m.cols() == 2);
  CHECK(m.values(1, 0) == 1.0);
}

TEST_CASE("similarity prototypes are the most frequent, ties lexicographic") {
  EncoderParams p;
  p.max_prototypes = 2;
  const Frame f = cities({"b", "c", "a", "c", "b", "d"}, {0, 0, 0, 0, 0, 1});
  const Encoder e = fit_encoder(EncoderKind::similarity, f, p);
  CHECK(e.columns[0].prototypes == std::vector<std::string>{"b", "c"});
}

TEST_CASE("leave-one-out on a singleton category falls back to the prior") {
  EncoderParams p;
  p.smoothing = 5.0;
  const Frame f = cities({"a", "a", "b", "a"}, {1, 0, 1, 0});
  const auto fe = fit_transform(EncoderKind::loo, f, p);
  // Row 2 is alone in "b"; without its own label the remaining rows have prevalence 1/3.
  CHECK(city_value(fe.train, 2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("transform is deterministic and leaves fitted state alone") {
  Rng rng(1);
  const Frame train = random_frame(rng, 80);
  const Frame other = random_frame(rng, 30);
  for (auto kind : kAllKinds) {
    CAPTURE(to_string(kind));
    const Encoder e = fit_encoder(kind, train);
    const auto before = to_json(e).dump();
    const auto a = transform(e, other);
    const auto b = transform(e, other);
    CHECK(a.values == b.values);
    CHECK(to_json(e).dump() == before);
    CHECK(a.values.allFinite());
    CHECK(encoder_from_json(to_json(e)).dimension() == e.dimension());
  }
}

TEST_CASE("trigram similarity against brute force") {
  CHECK(jaccard(trigrams("abcd"), trigrams("abcd")) == 1.0);
  CHECK(jaccard(trigrams("abc"), trigrams("xyz")) == 0.0);
  CHECK(trigrams("abcd") == grams_by_hand("abcd"));
  CHECK(jaccard(trigrams("abcd"), trigrams("abce")) == doctest::Approx(jaccard_by_hand("abcd", "abce")));
  CHECK(jaccard_by_hand("abcd", "abce") == doctest::Approx(3.0 / 9.0));
  const std::vector<std::string> protos{"abcd", "xyz"};
  const Vector s = similarity_profile("abcd", protos);
  CHECK(s(0) == 1.0);
  CHECK(s(1) == 0.0);
}

TEST_CASE("minhash signatures") {
  const auto seeds = minhash_seeds(9, 30);
  CHECK(minhash_signature("Private Clinic", seeds) == minhash_signature("Private Clinic", seeds));

  // Empty value has the single gram "###".
  const auto one = minhash_seeds(4, 1);
  const double expected = static_cast<double>(splitmix64(fnv1a("###") ^ one[0])) * 0x1.0p-64;
  CHECK(minhash_signature("", one)(0) == expected);
}

TEST_CASE("minhash collision rate tracks trigram jaccard") {
  const auto seeds = minhash_seeds(2024, 128);
  const std::vector<std::pair<std::string, std::string>> pairs{
      {"Primary Health Centre Rampur", "Primary Health Centre Ramgaon"},
      {"Chemist Shop Nagpur", "Private Clinic Nagpur"},
      {"abcdefgh", "abcdefgx"},
  };
  for (const auto& [a, b] : pairs) {
    const Vector sa = minhash_signature(a, seeds), sb = minhash_signature(b, seeds);
    const double agree = (sa.array() == sb.array()).cast<double>().mean();
    const double j = jaccard_by_hand(a, b);
    CAPTURE(a);
    CHECK(std::abs(agree - j) <= 3.0 * std::sqrt(j * (1.0 - j) / 128.0) + 1e-9);
  }
}

TEST_CASE("ratio encodings") {
  const CategoryCounts global{5.0, 5.0};
  CHECK(ratio_encode(EncoderKind::prob_ratio, {2.0, 2.0}, global) == doctest::Approx(1.0));
  CHECK(ratio_encode(EncoderKind::log_odds, {2.0, 2.0}, global) == doctest::Approx(0.0));
  // Category [1, 1]: smoothed p = 3/4, odds = 3/1; global p = 6/12, odds = 6/6.
  CHECK(ratio_encode(EncoderKind::prob_ratio, {2.0, 0.0}, global) == doctest::Approx(1.5));
  CHECK(ratio_encode(EncoderKind::odds_ratio, {2.0, 0.0}, global) == doctest::Approx(3.0));
  CHECK(ratio_encode(EncoderKind::log_odds, {2.0, 0.0}, global) == doctest::Approx(std::log(3.0)));
  CHECK(ratio_encode(EncoderKind::odds_ratio, {0.0, 4.0}, global) < 1.0);
}

TEST_CASE("ordered target statistics") {
  // r1 (y=1) and r2 (y=0) share "a". Leaving r2 out, the other rows have prevalence 2/4 = 0.5.
  const Frame f = cities({"a", "a", "b", "b", "b"}, {1, 0, 0, 1, 0});
  bool saw_r1_first = false;
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    const auto fe = ordered_target_encode(f, seed, 1.0);
    const double v0 = city_value(fe.train, 0), v1 = city_value(fe.train, 1);
    // The first row of a category sees only its leave-one-out prior.
    if (v0 == doctest::Approx(0.25)) {
      saw_r1_first = true;
      CHECK(v1 == doctest::Approx(0.75));
    } else {
      CHECK(v1 == doctest::Approx(0.5));
      CHECK(v0 == doctest::Approx((0.0 + 0.25) / 2.0));
    }
    CHECK(ordered_target_encode(f, seed, 1.0).train.values == fe.train.values);
  }
  CHECK(saw_r1_first);
}

TEST_CASE("training-time encodings never read their own label") {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Frame f = random_frame(rng, 25);
    EncoderParams p;
    p.seed = 5;
    p.smoothing = 3.0;
    for (auto kind : {EncoderKind::loo, EncoderKind::ordered_target}) {
      const auto fe = fit_transform(kind, f, p);
      for (std::size_t i = 0; i < f.rows(); ++i)
        CHECK(city_value(fit_transform(kind, flip_label(f, i), p).train, i) == city_value(fe.train, i));
    }
  }
}

TEST_CASE("leave-one-out equals a target encoder fitted without the row") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    const Frame f = random_frame(rng, 20);
    EncoderParams p;
    p.smoothing = 2.0;
    const auto fe = fit_transform(EncoderKind::loo, f, p);
    for (std::size_t i = 0; i < f.rows(); ++i) {
      std::vector<std::size_t> others;
      for (std::size_t r = 0; r < f.rows(); ++r)
        if (r != i) others.push_back(r);
      const Encoder without = fit_encoder(EncoderKind::target, f.take(others), p);
      const std::vector<std::size_t> me{i};
      CHECK(city_value(fe.train, i) == doctest::Approx(city_value(transform(without, f.take(me)), 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("label-free encodings ignore the label column") {
  Rng rng(4);
  const Frame f = random_frame(rng, 40);
  Column y = f.column("y");
  for (auto& c : y.codes) c = 1 - c;
  const Frame g = f.with_column("y", y);
  for (auto kind : {EncoderKind::similarity, EncoderKind::minhash, EncoderKind::count, EncoderKind::random_code}) {
    CAPTURE(to_string(kind));
    CHECK(fit_transform(kind, f).train.values == fit_transform(kind, g).train.values);
    CHECK_FALSE(uses_labels(kind));
  }
}

TEST_CASE("reserved encoder names are unsupported") {
  CHECK_THROWS_AS(parse_encoder_kind("entity-embedding"), ConfigError);
  CHECK_THROWS_AS(parse_encoder_kind("gap"), ConfigError);
  CHECK_THROWS_AS(parse_encoder_kind("onehot"), ConfigError);
  for (auto kind : kAllKinds) CHECK(parse_encoder_kind(to_string(kind)) == kind);
}
