#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "propweight/design.hpp"

namespace propweight {

inline double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

struct IrlsOptions {
  double score_tolerance = 1e-8;
  double relative_deviance_tolerance = 1e-10;
  int max_iterations = 100;
  // Fitted linear predictors beyond this magnitude mean the probabilities
  // have saturated; reported as separation.
  double separation_threshold = 30.0;
  bool check_rank = true;
};

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;  // probabilities
  double log_likelihood = 0.0;  // weighted
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> deviance_trace;
};

// Weighted Bernoulli log-likelihood sum_i w_i [y_i eta_i - log(1 + exp eta_i)].
double logistic_log_likelihood(const Eigen::MatrixXd& X, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& coef);

// Newton/IRLS maximiser of the weighted logistic log-likelihood with
// step-halving. Empty w means unit weights. Throws RankDeficient,
// Separation or NotConverged.
LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, std::span<const double> y,
                              std::span<const double> w = {}, const IrlsOptions& options = {},
                              const Eigen::VectorXd* start = nullptr);

double aic(int parameters, double log_likelihood);

struct StepRecord {
  std::string added;  // "(Intercept)" for the starting model
  double aic = 0.0;
};

struct StepwiseResult {
  std::vector<std::size_t> selected;  // candidate column indices, intercept first
  LogisticFit fit;
  std::vector<StepRecord> trace;
  std::vector<std::string> skipped;  // candidate fits that failed, with reason
};

struct StepwiseOptions {
  IrlsOptions irls;
  bool hierarchy = true;  // product/square columns need their parents selected
  int max_steps = -1;     // unlimited when negative
};

// Forward selection by AIC, starting from the intercept-only model.
StepwiseResult fit_logistic_stepwise(const DesignMatrix& candidates, std::span<const double> y,
                                     const StepwiseOptions& options = {});

}  // namespace propweight
