#include "doctest.h"

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "propweight/cbps.hpp"
#include "propweight/entropy_balancing.hpp"
#include "propweight/error.hpp"
#include "propweight/forest.hpp"
#include "propweight/logistic.hpp"
#include "propweight/membership.hpp"

using namespace propweight;

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::MatrixXd intercept_only(Eigen::Index n) { return Eigen::MatrixXd::Ones(n, 1); }

DataTable continuous_table(std::mt19937_64& rng, std::size_t n, int k) {
  std::normal_distribution<double> z(0.0, 1.0);
  Schema schema;
  std::vector<DataTable::Column> cols(k);
  for (int j = 0; j < k; ++j) {
    schema.push_back(VariableSpec::continuous("x" + std::to_string(j + 1)));
    for (std::size_t i = 0; i < n; ++i) cols[j].numeric.push_back(z(rng));
  }
  return DataTable(schema, cols);
}

}  // namespace

TEST_CASE("intercept-only logistic closed forms") {
  const std::vector<double> half{1, 1, 0, 0};
  auto fit = fit_logistic_irls(intercept_only(4), half);
  CHECK(fit.coef(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fit.fitted(2) == doctest::Approx(0.5));
  const std::vector<double> three{1, 1, 1, 0};
  fit = fit_logistic_irls(intercept_only(4), three);
  CHECK(fit.coef(0) == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(aic(3, -10.0) == 26.0);
}

TEST_CASE("logistic fits match a derivative-free maximiser") {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int rep = 0; checked < 20 && rep < 200; ++rep) {
    const bool weighted = rep % 2 == 1;
    auto inst = oracle::random_instance(rng, 30 + rep % 31, 2 + rep % 3, weighted);
    LogisticFit fit;
    try {
      fit = fit_logistic_irls(inst.X, to_vec(inst.y), to_vec(inst.w));
    } catch (const Error&) {
      continue;
    }
    auto negll = [&](const Eigen::VectorXd& b) { return -oracle::weighted_loglik(inst.X, inst.y, inst.w, b); };
    const Eigen::VectorXd nm = oracle::nelder_mead(negll, Eigen::VectorXd::Zero(inst.X.cols()));
    CHECK((nm - fit.coef).cwiseAbs().maxCoeff() < 1e-6);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("logistic score identities and label swap") {
  std::mt19937_64 rng(23);
  auto inst = oracle::random_instance(rng, 120, 3, false);
  const auto C = to_vec(inst.y);
  const auto fit = fit_logistic_irls(inst.X, C);
  const Eigen::VectorXd score = inst.X.transpose() * (inst.y - fit.fitted);
  CHECK(score.cwiseAbs().maxCoeff() < 1e-6);

  double lhs = 0.0, rhs = 0.0;
  for (Eigen::Index i = 0; i < inst.y.size(); ++i) (C[i] == 1.0 ? lhs : rhs) += C[i] == 1.0 ? 1.0 - fit.fitted(i) : fit.fitted(i);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));

  std::vector<double> flipped(C.size());
  std::transform(C.begin(), C.end(), flipped.begin(), [](double c) { return 1.0 - c; });
  const auto swapped = fit_logistic_irls(inst.X, flipped);
  CHECK((swapped.coef + fit.coef).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("separation is reported") {
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  const std::vector<double> y{0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(fit_logistic_irls(X, y), Error);
  try {
    fit_logistic_irls(X, y);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Separation);
  }
}

TEST_CASE("stepwise selection") {
  SUBCASE("predictive column enters first") {
    std::mt19937_64 rng(31);
    const auto t = continuous_table(rng, 2000, 6);
    std::vector<double> C(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) C[i] = bernoulli(rng, expit(1.2 * t.numeric("x4")[i])) ? 1.0 : 0.0;
    const std::vector<std::string> vars{"x1", "x2", "x3", "x4", "x5", "x6"};
    const auto candidates = build_design_matrix(t, vars, Expansion::second_order);
    const auto step = fit_logistic_stepwise(candidates, C);
    REQUIRE(step.trace.size() >= 2);
    CHECK(step.trace[0].added == "(Intercept)");
    CHECK(step.trace[1].added == "x4");
    for (std::size_t k = 1; k < step.trace.size(); ++k) CHECK(step.trace[k].aic < step.trace[k - 1].aic);
  }
  SUBCASE("null membership keeps the intercept-only model") {
    std::mt19937_64 rng(2);
    const auto t = continuous_table(rng, 3000, 2);
    std::vector<double> C(t.rows());
    for (auto& c : C) c = bernoulli(rng, 0.4) ? 1.0 : 0.0;
    const std::vector<std::string> vars{"x1", "x2"};
    const auto step = fit_logistic_stepwise(build_design_matrix(t, vars, Expansion::second_order), C);
    CHECK(step.selected == std::vector<std::size_t>{0});
  }
}

TEST_CASE("cbps") {
  SUBCASE("score moments only reproduce the logistic MLE") {
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 5; ++rep) {
      auto inst = oracle::random_instance(rng, 200, 2, false);
      const auto C = to_vec(inst.y);
      const auto mle = fit_logistic_irls(inst.X, C);
      const auto cb = fit_cbps(inst.X, C, CbpsOptions{false});
      CHECK((cb.coef - mle.coef).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("a constant balance moment matches the weighted count") {
    std::vector<double> C(50, 0.0);
    std::fill(C.begin(), C.begin() + 18, 1.0);
    const auto cb = fit_cbps(intercept_only(50), C);
    double weighted = 0.0;
    for (int i = 0; i < 18; ++i) weighted += (1.0 - cb.fitted(i)) / cb.fitted(i);
    CHECK(weighted == doctest::Approx(32.0).epsilon(1e-6));
  }
  SUBCASE("identical distributions give small balance residuals") {
    std::mt19937_64 rng(43);
    const auto t = continuous_table(rng, 4000, 2);
    std::vector<double> C(t.rows());
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = i < 2000 ? 1.0 : 0.0;
    const std::vector<std::string> vars{"x1", "x2"};
    const auto X = build_design_matrix(t, vars, Expansion::orthogonal_poly2).values;
    const auto mle = fit_logistic_irls(X, C);
    const auto cb = fit_cbps(X, C);
    CHECK((cb.fitted - mle.fitted).cwiseAbs().maxCoeff() < 0.01);
    const Eigen::MatrixXd g = cbps_moments(X, C, cb.coef, true).rightCols(X.cols());
    const Eigen::RowVectorXd mean = g.colwise().mean();
    const Eigen::MatrixXd centered = g.rowwise() - mean;
    const Eigen::VectorXd se = (centered.array().square().colwise().sum() / (g.rows() - 1.0)).sqrt() /
                               std::sqrt(static_cast<double>(g.rows()));
    CHECK(cb.balance_residuals.norm() < 3.0 * se.norm());
  }
}

TEST_CASE("entropy balancing") {
  SUBCASE("two-point closed form") {
    Eigen::MatrixXd f(2, 1);
    f << 0, 1;
    const auto fit = fit_entropy_balancing(f, Eigen::VectorXd::Constant(1, 0.75));
    CHECK(fit.weights(0) == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(fit.weights(1) == doctest::Approx(0.75).epsilon(1e-10));
  }
  SUBCASE("targets already met give the base weights") {
    Eigen::MatrixXd f(4, 1);
    f << -1, 1, -2, 2;
    const auto fit = fit_entropy_balancing(f, Eigen::VectorXd::Zero(1));
    for (int i = 0; i < 4; ++i) CHECK(fit.weights(i) == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("third-degree moments match the primal oracle") {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
      Eigen::MatrixXd f(200, 3);
      Eigen::VectorXd v(200);
      for (int i = 0; i < 200; ++i) {
        const double x = z(rng);
        f.row(i) << x, x * x, x * x * x;
        v(i) = std::exp(0.4 * x) * u(rng);
      }
      v /= v.sum();
      const Eigen::VectorXd targets = f.transpose() * v;
      const auto fit = fit_entropy_balancing(f, targets);
      CHECK((f.transpose() * fit.weights - targets).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(fit.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(fit.weights.minCoeff() > 0.0);
      const Eigen::VectorXd primal = oracle::entropy_primal(f, targets, Eigen::VectorXd::Constant(200, 1.0 / 200), v);
      CHECK((primal - fit.weights).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("unreachable target") {
    Eigen::MatrixXd f(3, 1);
    f << 0, 1, 2;
    CHECK_THROWS_AS(fit_entropy_balancing(f, Eigen::VectorXd::Constant(1, 5.0)), Error);
  }
}

TEST_CASE("random forest") {
  std::mt19937_64 rng(53);
  Eigen::MatrixXd X(100, 2);
  std::vector<double> C(100);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    C[i] = i % 2;
    X(i, 0) = C[i];
    X(i, 1) = z(rng);
  }
  ForestConfig cfg;
  cfg.n_trees = 200;
  cfg.mtry = 2;
  const auto forest = fit_random_forest(X, C, cfg);
  CHECK(forest.oob_error() <= 0.05);

  const auto trimmed = trim_probabilities({forest.predict(X)});
  CHECK(trimmed.values.maxCoeff() == 0.99);
  CHECK(trimmed.values.minCoeff() >= 0.01);

  auto doc = forest.to_json();
  std::reverse(doc["trees"].begin(), doc["trees"].end());
  const auto reversed = RandomForest::from_json(doc);
  CHECK((reversed.predict(X) - forest.predict(X)).cwiseAbs().maxCoeff() < 1e-12);

  const auto serial = fit_random_forest(X, C, cfg, Execution::serial);
  CHECK(serial.to_json() == forest.to_json());

  const Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(100, 2);
  try {
    fit_random_forest(constant, C, cfg);
    FAIL("expected DegenerateFeatures");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateFeatures);
  }
  const std::vector<double> pure(100, 1.0);
  CHECK_THROWS_AS(fit_random_forest(X, pure, cfg), Error);
}

TEST_CASE("probabilities and weights arithmetic") {
  const auto trimmed = trim_probabilities({Eigen::Vector3d(0.0, 0.5, 1.0)});
  CHECK(trimmed.values == Eigen::Vector3d(0.01, 0.5, 0.99));
  CHECK(trim_probabilities({Eigen::VectorXd::Constant(1, 0.3)}).values(0) == 0.3);
  CHECK(trim_probabilities({Eigen::VectorXd::Constant(1, 0.005)}).values(0) == 0.005);

  auto w = weights_from_probabilities({Eigen::Vector2d(0.5, 0.5)}, Normalization::sum_to_one);
  CHECK(w.values == Eigen::Vector2d(0.5, 0.5));
  w = weights_from_probabilities({Eigen::VectorXd::Constant(1, 0.2)}, Normalization::raw);
  CHECK(w.values(0) == 4.0);
  w = weights_from_probabilities({Eigen::Vector2d(0.2, 0.8)}, Normalization::sum_to_one);
  CHECK(w.values(0) == doctest::Approx(4.0 / 4.25).epsilon(1e-14));
  CHECK(w.values(1) == doctest::Approx(0.25 / 4.25).epsilon(1e-14));
  w = weights_from_probabilities({Eigen::Vector3d(0.1, 0.3, 0.6)}, Normalization::mean_one);
  CHECK(w.values.mean() == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int i = 0; i < 200; ++i) {
    double a = u(rng), b = u(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const auto pair = weights_from_probabilities({Eigen::Vector2d(a, b)}, Normalization::raw);
    CHECK(pair.values(0) > pair.values(1));
  }
  CHECK_THROWS_AS(weights_from_probabilities({Eigen::Vector2d(0.0, 0.5)}, Normalization::raw), Error);
}

TEST_CASE("logistic membership prediction") {
  const auto t = testing::numeric_table("x", {1.65, 0.0, -2.0});
  const std::vector<std::string> vars{"x"};
  MembershipModel model;
  model.payload = LogisticPayload{DesignSpec::fit(t, vars, Expansion::main_effects), Eigen::Vector2d(0.0, 1.0), {}};
  const auto p = predict_probability(model, t);
  CHECK(p.values(0) == doctest::Approx(0.8389).epsilon(1e-4));
  CHECK(p.values(1) == 0.5);
  model.payload = LogisticPayload{DesignSpec::fit(t, vars, Expansion::main_effects), Eigen::Vector2d::Zero(), {}};
  CHECK(predict_probability(model, t).values == Eigen::Vector3d::Constant(0.5));

  const auto restored = model_from_json(model_to_json(model));
  CHECK(predict_probability(restored, t).values == Eigen::Vector3d::Constant(0.5));
}

TEST_CASE("estimate_weights for every method") {
  std::mt19937_64 rng(61);
  const auto conv = testing::mixed_table(rng, 150, 0.5);
  const auto rep = testing::mixed_table(rng, 300, 0.0);
  const std::vector<std::string> vars{"x1", "x2", "g"};
  const auto combined = combine(conv, rep, vars);
  for (auto method : {WeightMethod::logistic, WeightMethod::cbps, WeightMethod::entropy_balancing,
                      WeightMethod::random_forest}) {
    CAPTURE(to_string(method));
    WeightingConfig cfg;
    cfg.method = method;
    cfg.covariates = vars;
    cfg.forest.n_trees = 50;
    const auto result = estimate_weights(combined, cfg);
    CHECK(result.weights.values.size() == 150);
    CHECK(result.weights.values.minCoeff() > 0.0);
    CHECK(result.weights.values.mean() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(result.probabilities.values.size() == 450);
    CHECK(result.probabilities.values.minCoeff() > 0.0);
    CHECK(result.probabilities.values.maxCoeff() < 1.0);
    if (method != WeightMethod::random_forest) {
      const auto again = predict_probability(model_from_json(model_to_json(result.model)), combined.data);
      CHECK((again.values - result.probabilities.values).cwiseAbs().maxCoeff() < 1e-9);
    }
    if (method == WeightMethod::entropy_balancing) {
      const double share = 150.0 / 450.0;
      CHECK(result.probabilities.values.head(150).mean() == doctest::Approx(share).epsilon(1e-8));
    }
  }
}
