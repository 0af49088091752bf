#include "doctest.h"

#include <random>

#include "helpers.hpp"
#include "propweight/data.hpp"
#include "propweight/error.hpp"

using namespace propweight;

namespace {

Schema person_schema() {
  return {VariableSpec::continuous("age"), VariableSpec::categorical("sex", {"M", "F"})};
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("schema json round trip and strictness") {
  const Schema s = person_schema();
  CHECK(schema_from_json(schema_to_json(s)) == s);
  CHECK(s[1].reference == "M");
  CHECK(kind_of([] { schema_from_json({{"variables", nlohmann::json::array()}, {"extra", 1}}); }) ==
        ErrorKind::ConfigError);
  CHECK(kind_of([] { validate_schema({VariableSpec::categorical("g", {"a", "a"})}); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("csv ingestion") {
  const auto t = testing::table_from_csv("sex,age\nF,30\nM,41.5\n", person_schema());
  REQUIRE(t.rows() == 2);
  CHECK(t.numeric("age")[1] == 41.5);
  CHECK(t.codes("sex")[0] == 1);

  SUBCASE("drop_rows removes rows with an empty cell") {
    std::istringstream in("age,sex\n30,F\n,M\n50,M\n");
    const auto loaded = read_csv(in, person_schema(), {MissingPolicy::drop_rows, false});
    CHECK(loaded.table.rows() == 2);
    CHECK(loaded.dropped_count == 1);
  }
  SUBCASE("errors") {
    CHECK(kind_of([] { testing::table_from_csv("age,sex\n30,X\n", person_schema()); }) == ErrorKind::UnknownLevel);
    CHECK(kind_of([] { testing::table_from_csv("age,sex\nabc,M\n", person_schema()); }) == ErrorKind::ParseError);
    CHECK(kind_of([] { testing::table_from_csv("age,sex,zip\n30,M,1\n", person_schema()); }) ==
          ErrorKind::UnknownColumn);
    CHECK(kind_of([] { testing::table_from_csv("age,sex\n30,\n", person_schema()); }) == ErrorKind::ParseError);
    CHECK(kind_of([] {
            std::istringstream in("age,sex\n,M\n");
            read_csv(in, person_schema(), {MissingPolicy::drop_rows, false});
          }) == ErrorKind::EmptyResult);
  }
  SUBCASE("quoted fields") {
    const auto f = split_csv_record(R"(a,"b,c","d""e")");
    REQUIRE(f.size() == 3);
    CHECK(f[1] == "b,c");
    CHECK(f[2] == "d\"e");
  }
}

TEST_CASE("pseudopopulation expansion") {
  const auto t = testing::numeric_table("x", {1, 2, 3});
  const auto pp = expand_pseudopopulation(make_survey_sample(t, {2.0, 4.0, 3.0}));
  CHECK(pp.replication_count == std::vector<std::size_t>{1, 2, 2});
  CHECK(pp.data.rows() == 5);
  CHECK(pp.source_row == std::vector<std::size_t>{0, 1, 1, 2, 2});
  CHECK(pp.data.numeric("x") == std::vector<double>{1, 2, 2, 3, 3});

  const auto same = expand_pseudopopulation(make_survey_sample(t, {7.0, 7.0, 7.0}));
  CHECK(same.data.rows() == 3);
  CHECK(same.inflation_ratio == 1.0);

  CHECK(kind_of([&] { expand_pseudopopulation(make_survey_sample(t, {1.0, 0.0, 2.0})); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("expansion counts are ceilings of the weight ratio") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 400.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> w(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = u(rng);
      x[i] = static_cast<double>(i);
    }
    const auto pp = expand_pseudopopulation(make_survey_sample(testing::numeric_table("x", x), w));
    const double m = *std::min_element(w.begin(), w.end());
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(pp.replication_count[i] == static_cast<std::size_t>(std::ceil(w[i] / m)));
      total += pp.replication_count[i];
    }
    CHECK(pp.data.rows() == total);
  }
}

TEST_CASE("combine stacks convenience rows first") {
  const auto conv = testing::table_from_csv("age,sex\n30,F\n40,M\n", person_schema());
  const auto rep = testing::table_from_csv("age,sex\n50,F\n60,M\n70,M\n", person_schema());
  const std::vector<std::string> vars{"age", "sex"};
  const auto c = combine(conv, rep, vars);
  CHECK(c.rows() == 5);
  CHECK(c.membership == std::vector<double>{1, 1, 0, 0, 0});
  CHECK(c.data.numeric("age")[2] == 50);

  const Schema other{VariableSpec::continuous("age"), VariableSpec::categorical("sex", {"M", "F", "X"})};
  const auto rep2 = testing::table_from_csv("age,sex\n50,F\n", other);
  CHECK(kind_of([&] { combine(conv, rep2, vars); }) == ErrorKind::SchemaMismatch);
}
