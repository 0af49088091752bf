#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "propweight/bootstrap.hpp"
#include "propweight/data.hpp"
#include "propweight/membership.hpp"
#include "propweight/parallel.hpp"
#include "propweight/rng.hpp"

namespace propweight {

struct FinitePopulation {
  DataTable data;
  std::size_t size() const { return data.rows(); }
};

// age (continuous), sex {male, female}, education {<HS, HS, some_college,
// college_grad} with reference college_grad, race_ethnicity {NH_White,
// Hispanic, NH_Asian, NH_Black}, exercise {no, yes}.
Schema simulation_schema();

// Exercise is drawn with probability 0.40/0.45/0.50/0.55 across the four
// education levels (<HS to college_grad), 0.5 on average.
FinitePopulation synthetic_population(std::size_t N = 40000, std::uint64_t seed = kDefaultSeed);

// Throws InvalidArgument unless the table uses simulation_schema()'s variables.
void validate_population(const DataTable& table);

struct BiasedSamplingModel {
  double intercept = 4.0;
  double female = 0.15;
  double high_school = 0.25;
  double less_than_high_school = 0.1;
  double some_college = 0.4;
  double hispanic = 0.85;
  double nh_asian = 0.45;
  double nh_asian_some_college = 1.0;
  double nh_black = 0.05;
  double nh_black_exercise = 0.75;
  double age_squared = -0.001;
};

Eigen::VectorXd biased_sampling_probability(const DataTable& rows, const BiasedSamplingModel& model = {});

struct OutcomeGenModel {
  double intercept = 1.0;
  double hispanic = 0.6931471805599453;    // log 2
  double nh_asian = -1.0986122886681098;   // -log 3
  double nh_black = 0.4054651081081644;    // log 1.5
  double p = -0.6931471805599453;          // -log 2
  double hispanic_p = 0.6931471805599453;  // log 2
  double nh_asian_p = 1.3862943611198906;  // log 4
  double nh_black_p = -1.0986122886681098; // -log 3
};

Eigen::VectorXd outcome_probability(const DataTable& rows, const Eigen::VectorXd& P,
                                    const OutcomeGenModel& model = {});
std::vector<double> generate_outcome(const DataTable& rows, const Eigen::VectorXd& P, Rng& rng,
                                     const OutcomeGenModel& model = {});

// Sorted population row indices. Throws InvalidArgument when n > N.
std::vector<std::size_t> draw_srs(std::size_t N, std::size_t n, Rng& rng);
// Successive sampling proportional to P without replacement, via
// Efraimidis-Spirakis keys u^(1/P).
std::vector<std::size_t> draw_biased(const Eigen::VectorXd& P, std::size_t n, Rng& rng);

enum class TrueWeightForm {
  odds,     // (1 - P) / P
  inverse,  // 1 / P
};

PropensityWeights true_weights(const Eigen::VectorXd& P, TrueWeightForm form = TrueWeightForm::odds,
                               Normalization normalization = Normalization::mean_one);

// 100 (biased - srs) / |srs|; NaN when |srs| <= 1e-8.
Eigen::VectorXd percent_bias(const Eigen::VectorXd& mean_biased, const Eigen::VectorXd& mean_srs);
// Element-wise variance ratio. Throws InvalidArgument on a zero denominator.
Eigen::VectorXd design_effect(const Eigen::VectorXd& var_weighted, const Eigen::VectorXd& var_srs);

struct BalanceEntry {
  std::string covariate;
  std::string level;  // empty for continuous
  double difference = 0.0;  // NaN when the representative SD is zero
  bool defined = true;
};

// (weighted convenience mean - representative mean) / representative SD,
// per continuous covariate and per categorical level (all levels).
std::vector<BalanceEntry> standardized_difference(const DataTable& convenience,
                                                  const DataTable& representative,
                                                  std::span<const std::string> covariates,
                                                  const Eigen::VectorXd* weights = nullptr);

struct SimulationConfig {
  int n_sims = 200;
  std::size_t sample_size = 500;
  std::size_t reference_size = 5000;  // 0: the replicate's SRS is the reference
  int bootstrap_replicates = 50;
  int bootstrap_sims = -1;  // replicates getting a bootstrap; negative: all
  std::vector<WeightMethod> methods{WeightMethod::logistic, WeightMethod::cbps,
                                    WeightMethod::entropy_balancing, WeightMethod::random_forest};
  std::uint64_t seed = kDefaultSeed;
  WeightingConfig weighting;  // method is overridden per row
  std::vector<std::string> weight_covariates{"age", "sex", "education", "race_ethnicity", "exercise"};
  std::vector<std::string> outcome_covariates{"race_ethnicity"};
  std::string strata = "race_ethnicity";
  BiasedSamplingModel sampling;
  OutcomeGenModel outcome;
  TrueWeightForm true_weight_form = TrueWeightForm::odds;
  bool keep_replicates = false;
};

struct SimulationRow {
  std::string method;
  std::string coefficient;
  double mean_beta = 0.0;
  double empirical_se = 0.0;
  double mc_se = 0.0;       // empirical_se / sqrt(n_success)
  double diff_mc_se = 0.0;  // Monte Carlo SE of mean_beta - srs mean
  double mean_analytic_se = 0.0;
  std::string analytic_kind;
  double mean_design_se = 0.0;
  double mean_bootstrap_se = 0.0;  // NaN without bootstrap
  double percent_bias = 0.0;
  double design_effect = 0.0;
  std::size_t n_success = 0;
  std::size_t n_failed = 0;
  std::size_t bootstrap_sims = 0;
  std::size_t bootstrap_failed_replicates = 0;
};

struct BalanceRow {
  std::string method;  // "unweighted" or a weight method
  BalanceEntry entry;
};

struct SimulationFailure {
  int sim = 0;
  std::string method;
  std::string kind;
  std::string message;
};

struct SimulationReport {
  std::vector<std::string> coefficients;
  std::vector<SimulationRow> reference;  // the SRS fits
  std::vector<SimulationRow> rows;       // unweighted, true, then each method
  std::vector<BalanceRow> balance;       // replicate 0
  std::vector<SimulationFailure> failures;
  // Per method, per successful sim; filled when keep_replicates is set.
  std::map<std::string, std::vector<std::pair<int, Eigen::VectorXd>>> betas;

  const SimulationRow* find(std::string_view method, std::string_view coefficient) const;
};

SimulationReport run_simulation(const SimulationConfig& config, const FinitePopulation& population,
                                Execution policy = Execution::parallel);

}  // namespace propweight
