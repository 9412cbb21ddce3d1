#include "support.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using namespace lfu;
using lfu::test::frame_from;

TEST_CASE("csv with matching header loads every row") {
  const Frame f = frame_from("id,month,city,age,y\na,0,x,20,1\nb,0,y,30,0\nc,1,x,40,0\n");
  CHECK(f.rows() == 3);
  CHECK(f.token("city", 1) == "y");
  CHECK(f.column("age").values[2] == 40.0);
  CHECK(f.positives() == 1);
}

TEST_CASE("blank numeric cell becomes the missing marker") {
  const Frame f = frame_from("id,month,city,age,y\na,0,x,,1\nb,0,,30,0\n");
  const auto age = f.schema().index_of("age");
  const auto city = f.schema().index_of("city");
  CHECK(f.missing(age, 0));
  CHECK(std::isnan(f.column(age).values[0]));
  CHECK_FALSE(f.missing(age, 1));
  CHECK(f.missing(city, 1));
  CHECK(f.token(city, 1) == kMissingToken);
}

TEST_CASE("csv without the label column is a header mismatch") {
  CHECK_THROWS_AS(frame_from("id,month,city,age\na,0,x,20\n"), DataError);
}

TEST_CASE("schema manifest round trip and validation") {
  const Schema s = parse_schema(lfu::test::kSchemaText);
  CHECK(parse_schema(format_schema(s)) == s);
  CHECK(s.feature_names() == std::vector<std::string>{"city", "age"});
  CHECK_THROWS_AS(parse_schema("a = categorical\n"), ConfigError);
  CHECK_THROWS_AS(parse_schema("id = id\nm = timestamp\ny = label\nz = label\n"), ConfigError);
  CHECK_THROWS_AS(parse_schema("id = id\nm = timestamp\ny = label\nx = colour\n"), ConfigError);
  const Schema secondary = parse_schema("@secondary = true\nid = id\nhiv = categorical\n");
  CHECK(secondary.secondary);
}

namespace {

const char* kSideSchema = "@secondary = true\nid = id\nhiv = categorical\nweight = numeric\n";

}  // namespace

TEST_CASE("merge with full key overlap is a column-wise union") {
  const Frame spine = frame_from("id,month,city,age,y\na,0,x,20,1\nb,0,y,30,0\nc,1,x,40,0\n");
  const Frame side = frame_from("id,hiv,weight\nc,neg,50\na,pos,60\nb,neg,70\n", kSideSchema);
  const std::vector<Frame> regs{spine, side};
  const Frame m = merge_registers(regs, "id");
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 7);
  CHECK(m.token("id", 0) == "a");
  CHECK(m.token("hiv", 0) == "pos");
  CHECK(m.column("weight").values[2] == 50.0);
}

TEST_CASE("merge leaves unmatched spine rows missing") {
  const Frame spine = frame_from("id,month,city,age,y\na,0,x,20,1\nb,0,y,30,0\n");
  const Frame side = frame_from("id,hiv,weight\na,pos,60\n", kSideSchema);
  const std::vector<Frame> regs{spine, side};
  const Frame m = merge_registers(regs, "id");
  CHECK(m.rows() == 2);
  CHECK(m.missing(m.schema().index_of("hiv"), 1));
  CHECK(std::isnan(m.column("weight").values[1]));
}

TEST_CASE("merge refuses duplicate keys in a secondary register") {
  const Frame spine = frame_from("id,month,city,age,y\na,0,x,20,1\n");
  const Frame side = frame_from("id,hiv,weight\na,pos,60\na,neg,61\n", kSideSchema);
  const std::vector<Frame> regs{spine, side};
  CHECK_THROWS_AS(merge_registers(regs, "id"), DataError);
}

TEST_CASE("merge preserves spine size and order on random registers") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 5 + rng.below(30);
    std::string a = "id,month,city,age,y\n", b = "id,hiv,weight\n";
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t i = 0; i < n; ++i) a += "k" + std::to_string(i) + ",0,c" + std::to_string(i % 3) + ",1,0\n";
    for (auto i : perm)
      if (rng.bernoulli(0.7)) b += "k" + std::to_string(i) + ",h,1\n";
    const std::vector<Frame> regs{frame_from(a), frame_from(b, kSideSchema)};
    const Frame m = merge_registers(regs, "id");
    REQUIRE(m.rows() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(m.token("id", i) == "k" + std::to_string(i));
  }
}

TEST_CASE("impute fills numeric means and the missing token") {
  const Frame f = frame_from("id,month,city,age,y\na,0,x,20,1\nb,0,,,0\nc,1,x,40,0\n");
  const Frame g = impute(f);
  CHECK(g.column("age").values == std::vector<double>{20.0, 30.0, 40.0});
  CHECK(g.token("city", 0) == "x");
  CHECK(g.token("city", 1) == kMissingToken);
  CHECK(same_cells(impute(g), g));

  const Frame clean = frame_from("id,month,city,age,y\na,0,x,20,1\n");
  CHECK(same_cells(impute(clean), clean));
}

TEST_CASE("csv round trip on random frames") {
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    std::string csv = "id,month,city,age,y\n";
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string city = rng.bernoulli(0.2) ? "" : rng.bernoulli(0.5) ? "\"a, b\"" : "q" + std::to_string(rng.below(4));
      const std::string age = rng.bernoulli(0.2) ? "" : format_number(rng.uniform(0.0, 90.0));
      csv += "r" + std::to_string(i) + "," + std::to_string(rng.below(12)) + "," + city + "," + age + "," +
             std::to_string(rng.below(2)) + "\n";
    }
    const Frame f = frame_from(csv);
    const Frame g = frame_from(format_csv(f));
    CHECK(same_cells(f, g));
  }
}

TEST_CASE("summary counts") {
  const Frame zero = frame_from("id,month,city,age,y\na,0,x,20,0\nb,0,y,30,0\n");
  CHECK(summarize(zero, {}).prevalence == 0.0);

  const Frame four = frame_from("id,month,city,age,y\na,0,x,20,1\nb,0,y,30,0\nc,0,x,,0\nd,0,x,1,0\n");
  const std::vector<std::string> cohorts{"city"};
  const auto s = summarize(four, cohorts);
  CHECK(s.prevalence == doctest::Approx(0.25));
  CHECK(s.missingness == doctest::Approx(1.0 / 8.0));
  std::size_t total = 0;
  for (const auto& c : s.cohorts.at("city")) total += c.n;
  CHECK(total == 4);
}

TEST_CASE("synthetic register is reproducible") {
  SynthConfig c;
  c.n = 3000;
  const auto a = synthesize(c, 7);
  const auto b = synthesize(c, 7);
  CHECK(same_cells(a.frame, b.frame));
  CHECK(format_csv(a.frame) == format_csv(b.frame));
  CHECK(a.truth.probability == b.truth.probability);
  CHECK_FALSE(format_csv(synthesize(c, 8).frame) == format_csv(a.frame));
}

TEST_CASE("synthetic register matches the target prevalence and missingness") {
  SynthConfig c;
  c.n = 100000;
  const auto s = synthesize(c, 7);
  const std::vector<std::string> cohorts{"State"};
  const auto summary = summarize(s.frame, cohorts);
  CHECK(std::abs(summary.prevalence - 0.0296) <= 0.005);
  CHECK(std::abs(summary.missingness - 0.0917) <= 0.01);
  std::size_t total = 0;
  for (const auto& st : summary.cohorts.at("State")) total += st.n;
  CHECK(total == c.n);
}

TEST_CASE("synthetic settings reject nonsense") {
  SynthConfig c;
  c.n = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json{{"rows", 5}}), ConfigError);
}
