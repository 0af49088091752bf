#include <benchmark/benchmark.h>

#include <random>

#include "propweight/bootstrap.hpp"
#include "propweight/forest.hpp"
#include "propweight/pipeline.hpp"
#include "propweight/simulation.hpp"

using namespace propweight;

namespace {

Execution policy_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void label(benchmark::State& state) { state.SetLabel(state.range(0) == 0 ? "serial" : "parallel"); }

struct Samples {
  DataTable convenience;
  DataTable representative;
};

const Samples& samples() {
  static const Samples s = [] {
    const auto pop = synthetic_population(20000, 3);
    const Eigen::VectorXd P = biased_sampling_probability(pop.data);
    auto rng = make_stream(3, 1);
    auto conv = pop.data.select_rows(draw_biased(P, 500, rng));
    const auto rep = pop.data.select_rows(draw_srs(pop.size(), 2000, rng));
    const Eigen::VectorXd Pc = biased_sampling_probability(conv);
    const auto y = generate_outcome(conv, Pc, rng);
    Schema schema = conv.schema();
    schema.push_back(VariableSpec::categorical("y", {"no", "yes"}));
    std::vector<DataTable::Column> cols;
    for (std::size_t c = 0; c < conv.cols(); ++c) {
      DataTable::Column col;
      if (conv.spec(c).is_categorical())
        col.codes = conv.codes(c);
      else
        col.numeric = conv.numeric(c);
      cols.push_back(col);
    }
    DataTable::Column yc;
    for (double v : y) yc.codes.push_back(v == 1.0 ? 1 : 0);
    cols.push_back(yc);
    return Samples{DataTable(schema, cols), rep};
  }();
  return s;
}

void BM_RandomForest(benchmark::State& state) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 2000;
  Eigen::MatrixXd X(n, 6);
  std::vector<double> C(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 6; ++j) X(i, j) = z(rng);
    C[i] = X(i, 0) + 0.5 * X(i, 1) * X(i, 2) + z(rng) > 0.0 ? 1.0 : 0.0;
  }
  ForestConfig cfg;
  cfg.n_trees = 100;
  for (auto _ : state) benchmark::DoNotOptimize(fit_random_forest(X, C, cfg, policy_of(state)));
  label(state);
}
BENCHMARK(BM_RandomForest)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const auto& s = samples();
  PipelineConfig cfg;
  cfg.weighting.covariates = {"age", "sex", "education", "race_ethnicity", "exercise"};
  cfg.weighting.stepwise = false;
  cfg.outcome = {"y", {"race_ethnicity"}};
  BootstrapConfig b;
  b.n_replicates = 20;
  b.strata_variable = "race_ethnicity";
  for (auto _ : state)
    benchmark::DoNotOptimize(bootstrap_pipeline(s.convenience, s.representative, cfg, b, policy_of(state)));
  label(state);
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Simulation(benchmark::State& state) {
  static const auto pop = synthetic_population(20000, 5);
  SimulationConfig cfg;
  cfg.n_sims = 8;
  cfg.bootstrap_replicates = 0;
  cfg.methods = {WeightMethod::logistic, WeightMethod::entropy_balancing};
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(cfg, pop, policy_of(state)));
  label(state);
}
BENCHMARK(BM_Simulation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
