#include "doctest.h"

#include <array>
#include <random>

#include "helpers.hpp"
#include "propweight/error.hpp"
#include "propweight/simulation.hpp"

using namespace propweight;

namespace {

DataTable people(const std::string& rows) {
  return testing::table_from_csv("age,sex,education,race_ethnicity,exercise\n" + rows, simulation_schema());
}

std::array<double, 4> race_counts(const DataTable& t, const std::vector<std::size_t>& idx) {
  std::array<double, 4> c{};
  for (auto i : idx) c[static_cast<std::size_t>(t.codes("race_ethnicity")[i])] += 1.0;
  return c;
}

}  // namespace

TEST_CASE("biased sampling probability") {
  const auto t = people(
      "50,female,college_grad,NH_White,no\n"
      "0,male,college_grad,NH_White,no\n"
      "30,male,college_grad,NH_White,no\n"
      "30,male,some_college,NH_Asian,no\n"
      "30,male,some_college,NH_White,no\n");
  const auto P = biased_sampling_probability(t);
  CHECK(P(0) == doctest::Approx(expit(1.65)).epsilon(1e-12));
  CHECK(std::abs(P(0) - 0.8389) < 5e-5);
  CHECK(std::abs(P(1) - 0.9820) < 5e-5);
  CHECK(logit(P(3)) - logit(P(2)) == doctest::Approx(0.45 + 0.4 + 1.0).epsilon(1e-12));
  CHECK(logit(P(3)) - logit(P(4)) == doctest::Approx(0.45 + 1.0).epsilon(1e-12));
}

TEST_CASE("outcome generation") {
  const auto t = people("40,male,HS,NH_White,no\n40,male,HS,NH_Asian,no\n");
  const auto pi = outcome_probability(t, Eigen::Vector2d(0.5, 0.0));
  CHECK(std::abs(pi(0) - 0.6578) < 5e-5);
  CHECK(std::abs(pi(1) - 0.4754) < 5e-5);

  std::string many;
  for (int i = 0; i < 100000; ++i) many += "40,male,HS,NH_White,no\n";
  const auto big = people(many);
  auto rng = make_stream(3, 0);
  const auto y = generate_outcome(big, Eigen::VectorXd::Constant(100000, 0.5), rng);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= 1e5;
  CHECK(std::abs(mean - pi(0)) < 3.0 * std::sqrt(pi(0) * (1.0 - pi(0)) / 1e5));
}

TEST_CASE("synthetic population") {
  const auto pop = synthetic_population(10000, 5);
  CHECK(pop.size() == 10000);
  std::vector<std::size_t> all(pop.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (double c : race_counts(pop.data, all)) CHECK(c >= 100.0);
  CHECK(synthetic_population(10000, 5).data == pop.data);
  CHECK_NOTHROW(validate_population(pop.data));
  CHECK_THROWS_AS(validate_population(testing::numeric_table("age", {1.0})), Error);
}

TEST_CASE("sampling designs") {
  const auto pop = synthetic_population(2000, 8);
  const Eigen::VectorXd P = biased_sampling_probability(pop.data);
  auto rng = make_stream(8, 1);
  CHECK(draw_srs(2000, 2000, rng).size() == 2000);
  const auto whole = draw_biased(P, 2000, rng);
  for (std::size_t i = 0; i < whole.size(); ++i) CHECK(whole[i] == i);
  CHECK_THROWS_AS(draw_srs(10, 11, rng), Error);

  SUBCASE("constant probabilities behave like simple random sampling") {
    std::vector<std::size_t> all(pop.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto population = race_counts(pop.data, all);
    std::array<double, 4> observed{};
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(2000, 0.3);
    for (int d = 0; d < 500; ++d) {
      auto r = make_stream(9, static_cast<std::uint64_t>(d));
      const auto c = race_counts(pop.data, draw_biased(flat, 100, r));
      for (int k = 0; k < 4; ++k) observed[k] += c[k];
    }
    double chi2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double expected = 500.0 * 100.0 * population[k] / 2000.0;
      chi2 += (observed[k] - expected) * (observed[k] - expected) / expected;
    }
    CHECK(chi2 < 16.27);
  }
  SUBCASE("the biased design over-represents Hispanic members") {
    std::vector<std::size_t> all(pop.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const double population_share = race_counts(pop.data, all)[1] / 2000.0;
    double share = 0.0;
    for (int d = 0; d < 200; ++d) {
      auto r = make_stream(10, static_cast<std::uint64_t>(d));
      share += race_counts(pop.data, draw_biased(P, 200, r))[1] / 200.0;
    }
    CHECK(share / 200.0 > population_share);
  }
}

TEST_CASE("true weights and summary arithmetic") {
  const auto flat = true_weights(Eigen::VectorXd::Constant(5, 0.5));
  CHECK(flat.values == Eigen::VectorXd::Ones(5));
  const auto raw = true_weights(Eigen::Vector2d(0.2, 0.8), TrueWeightForm::odds, Normalization::raw);
  CHECK(raw.values(0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(raw.values(1) == doctest::Approx(0.25).epsilon(1e-15));
  const auto inv = true_weights(Eigen::Vector2d(0.2, 0.8), TrueWeightForm::inverse, Normalization::raw);
  CHECK(inv.values == Eigen::Vector2d(5.0, 1.25));

  CHECK(percent_bias(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(1.0, 2.0)).isZero(0.0));
  CHECK(percent_bias(Eigen::VectorXd::Constant(1, 1.5), Eigen::VectorXd::Constant(1, 1.0))(0) == 50.0);
  CHECK(percent_bias(Eigen::VectorXd::Constant(1, -0.5), Eigen::VectorXd::Constant(1, -1.0))(0) == 50.0);
  CHECK(percent_bias(Eigen::VectorXd::Constant(1, 0.7), Eigen::VectorXd::Constant(1, -1.4))(0) == 150.0);
  CHECK(std::isnan(percent_bias(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Zero(1))(0)));
  CHECK(design_effect(Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(1, 0.3))(0) == 1.0);
  CHECK(design_effect(Eigen::VectorXd::Constant(1, 0.04), Eigen::VectorXd::Constant(1, 0.025))(0) ==
        doctest::Approx(1.6).epsilon(1e-14));
  CHECK_THROWS_AS(design_effect(Eigen::VectorXd::Constant(1, 0.04), Eigen::VectorXd::Zero(1)), Error);
}

TEST_CASE("standardized differences") {
  const std::vector<std::string> x{"x"};
  const auto conv = testing::numeric_table("x", {1.0});
  const auto rep = testing::numeric_table("x", {-std::sqrt(2.0), std::sqrt(2.0)});
  const auto d = standardized_difference(conv, rep, x);
  REQUIRE(d.size() == 1);
  CHECK(d[0].difference == doctest::Approx(0.5).epsilon(1e-14));
  const auto same = standardized_difference(rep, rep, x);
  CHECK(std::abs(same[0].difference) < 1e-15);
  const auto flat = standardized_difference(conv, testing::numeric_table("x", {2.0, 2.0}), x);
  CHECK_FALSE(flat[0].defined);
  CHECK(std::isnan(flat[0].difference));
}

TEST_CASE("entropy balancing zeroes first-moment differences") {
  const auto pop = synthetic_population(8000, 12);
  const Eigen::VectorXd P = biased_sampling_probability(pop.data);
  auto rng = make_stream(12, 1);
  const auto conv = pop.data.select_rows(draw_biased(P, 500, rng));
  const auto rep = pop.data.select_rows(draw_srs(pop.size(), 2000, rng));
  const std::vector<std::string> vars{"age", "sex", "education", "race_ethnicity", "exercise"};
  WeightingConfig cfg;
  cfg.method = WeightMethod::entropy_balancing;
  cfg.covariates = vars;
  const auto w = estimate_weights(combine(conv, rep, vars), cfg);
  const auto before = standardized_difference(conv, rep, vars);
  const auto after = standardized_difference(conv, rep, vars, &w.weights.values);
  REQUIRE(after.size() == before.size());
  for (const auto& e : after) CHECK(std::abs(e.difference) < 1e-8);
  double worst = 0.0;
  for (const auto& e : before) worst = std::max(worst, std::abs(e.difference));
  CHECK(worst > 0.05);
}

TEST_CASE("simulation runs are reproducible") {
  const auto pop = synthetic_population(5000, 21);
  SimulationConfig cfg;
  cfg.n_sims = 2;
  cfg.sample_size = 200;
  cfg.reference_size = 1000;
  cfg.bootstrap_replicates = 3;
  cfg.methods = {WeightMethod::logistic};
  cfg.seed = 7;
  cfg.keep_replicates = true;
  const auto a = run_simulation(cfg, pop, Execution::parallel);
  const auto b = run_simulation(cfg, pop, Execution::serial);
  REQUIRE(a.rows.size() == b.rows.size());
  std::vector<std::string> methods;
  for (const auto& row : a.rows)
    if (methods.empty() || methods.back() != row.method) methods.push_back(row.method);
  CHECK(methods == std::vector<std::string>{"unweighted", "true", "logistic"});
  CHECK(a.coefficients.size() == 4);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].mean_beta == b.rows[k].mean_beta);
    CHECK(a.rows[k].empirical_se == b.rows[k].empirical_se);
    const double x = a.rows[k].mean_bootstrap_se, y = b.rows[k].mean_bootstrap_se;
    CHECK(((std::isnan(x) && std::isnan(y)) || x == y));
  }
  CHECK(a.find("logistic", "race_ethnicity:Hispanic") != nullptr);
  CHECK(a.find("srs", "(Intercept)") == &a.reference[0]);
  CHECK(a.reference.size() == 4);
  CHECK(a.betas.at("logistic").size() == 2);
}
