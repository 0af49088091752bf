#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "propweight/cbps.hpp"
#include "propweight/data.hpp"
#include "propweight/design.hpp"
#include "propweight/entropy_balancing.hpp"
#include "propweight/forest.hpp"
#include "propweight/logistic.hpp"
#include "propweight/parallel.hpp"

namespace propweight {

enum class WeightMethod { logistic, cbps, entropy_balancing, random_forest };

std::string_view to_string(WeightMethod method);
// Accepts the long names and the short forms "eb" and "rf".
WeightMethod weight_method_from_string(std::string_view text);

enum class Normalization { sum_to_one, mean_one, raw };

std::string_view to_string(Normalization normalization);
Normalization normalization_from_string(std::string_view text);

struct MembershipProbabilities {
  Eigen::VectorXd values;
};

struct PropensityWeights {
  Eigen::VectorXd values;
  Normalization normalization = Normalization::raw;
};

// Degenerate 0/1 estimates become lo/hi; interior values are untouched.
MembershipProbabilities trim_probabilities(MembershipProbabilities p, double lo = 0.01,
                                           double hi = 0.99);

// w_i proportional to (1 - p_i) / p_i. Throws InvalidArgument unless every
// p lies strictly inside (0, 1).
PropensityWeights weights_from_probabilities(const MembershipProbabilities& p,
                                             Normalization normalization);

PropensityWeights normalize_weights(Eigen::VectorXd raw, Normalization normalization);

struct LogisticPayload {
  DesignSpec design;
  Eigen::VectorXd coef;
  std::vector<StepRecord> trace;
};

struct CbpsPayload {
  DesignSpec design;
  Eigen::VectorXd coef;
  Eigen::VectorXd balance_residuals;
};

struct EntropyPayload {
  MomentBasis basis;
  Eigen::VectorXd lambda;
  Eigen::VectorXd targets;
  double log_scale = 0.0;          // log w = log_scale + lambda'(f - targets)
  double probability_scale = 1.0;  // p = 1 / (1 + k w)
};

struct ForestPayload {
  DesignSpec features;  // main effects; the intercept column is not used
  std::shared_ptr<const RandomForest> forest;
};

struct MembershipModel {
  WeightMethod method = WeightMethod::logistic;
  std::variant<LogisticPayload, CbpsPayload, EntropyPayload, ForestPayload> payload;
  nlohmann::json diagnostics = nlohmann::json::object();
};

// logistic/cbps: expit(x'gamma). entropy balancing: 1 / (1 + k w) with k
// chosen at fit time so the convenience-sample mean equals n_C / (n_C + n_R);
// diagnostic only. random forest: ensemble average, then trimmed.
MembershipProbabilities predict_probability(const MembershipModel& model, const DataTable& rows);

nlohmann::json model_to_json(const MembershipModel& model);
MembershipModel model_from_json(const nlohmann::json& doc);

struct WeightingConfig {
  WeightMethod method = WeightMethod::logistic;
  std::vector<std::string> covariates;
  bool stepwise = true;  // logistic: forward AIC over second-order terms; else main effects
  int eb_degree = 3;
  CbpsOptions cbps;
  IrlsOptions irls;
  ForestConfig forest;
  bool forest_out_of_bag = true;  // score training rows with out-of-bag trees only
  Normalization normalization = Normalization::mean_one;
};

struct WeightingResult {
  MembershipModel model;
  MembershipProbabilities probabilities;  // every combined row
  PropensityWeights weights;              // convenience rows, in order
  Eigen::MatrixXd design;                 // combined design for logistic/cbps, else empty
};

WeightingResult estimate_weights(const CombinedSample& sample, const WeightingConfig& config,
                                 Execution policy = Execution::parallel);

}  // namespace propweight
