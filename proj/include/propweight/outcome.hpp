#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "propweight/logistic.hpp"

namespace propweight {

struct WeightedFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd weights;     // as supplied
  Eigen::VectorXd fitted_mu;
  Eigen::VectorXd response;
  bool converged = false;
  int iterations = 0;
  std::vector<double> deviance_trace;
};

// Logistic outcome model solving sum_i w_i (y_i - mu_i) z_i = 0 by weighted
// IRLS. The solution does not depend on the scale of w.
WeightedFit fit_weighted_glm(const Eigen::MatrixXd& Z, std::span<const double> y,
                             std::span<const double> w, const IrlsOptions& options = {});

enum class VarianceKind { model, design, proposed, bootstrap };

std::string_view to_string(VarianceKind kind);

struct VarianceEstimate {
  Eigen::MatrixXd matrix;
  VarianceKind kind = VarianceKind::design;
  Eigen::MatrixXd correction;        // proposed only: the subtracted term
  std::vector<std::size_t> not_psd;  // proposed only: coefficients that fell back to design
  std::vector<std::string> warnings;

  Eigen::VectorXd standard_errors() const;
};

// Inverse weighted information with weights rescaled to mean one.
VarianceEstimate model_variance(const WeightedFit& fit, const Eigen::MatrixXd& Z);

// A^{-1} B A^{-1}, A = Z' diag(w mu (1 - mu)) Z, B = sum_i U_i U_i' with
// U_i = w_i (y_i - mu_i) z_i. No finite population correction.
VarianceEstimate design_variance(const WeightedFit& fit, const Eigen::MatrixXd& Z);

// Which estimator of the score cross-covariance R to use.
enum class CrossTermForm {
  per_unit,         // sum_i U_i T_i'
  product_of_sums,  // (sum_i U_i)(sum_i T_i)', zero at the weighted MLE
};

struct StackedComponents {
  Eigen::MatrixXd info_tt;  // m x m
  Eigen::MatrixXd info_uu;  // p x p, "A"
  Eigen::MatrixXd info_ut;  // p x m
  Eigen::MatrixXd cross;    // p x m, "R"
  Eigen::MatrixXd score_outer;  // p x p, "B"
};

// Components of the stacked (weight model, outcome model) sandwich for a
// logistic membership model with coefficients gamma on the combined design
// X. Outcome weights are taken as (1 - P_i) / P_i = exp(-x_i'gamma) for the
// convenience rows (C = 1, in order), matching the rows of Z; the outcome fit
// must have been made with weights proportional to these.
StackedComponents stacked_components(const WeightedFit& fit, const Eigen::MatrixXd& Z,
                                     const Eigen::MatrixXd& X, std::span<const double> membership,
                                     const Eigen::VectorXd& gamma,
                                     CrossTermForm form = CrossTermForm::per_unit);

// A^{-1} B A^{-1} - A^{-1} I_UT I_TT^{-1} R' A^{-1}, symmetrised. Coefficients
// whose diagonal turns negative take their row and column from the design
// variance and are listed in not_psd.
VarianceEstimate proposed_variance(const StackedComponents& components);

struct PooledEstimate {
  Eigen::VectorXd beta_bar;
  Eigen::MatrixXd within;
  Eigen::MatrixXd between;
  Eigen::MatrixXd total;
  Eigen::VectorXd df;  // infinite when the between variance vanishes
  int imputations = 0;
};

PooledEstimate pool_rubin(std::span<const Eigen::VectorXd> betas,
                          std::span<const Eigen::MatrixXd> variances);

struct OddsRatioRow {
  std::string term;
  double estimate = 0.0;
  double se = 0.0;
  double odds_ratio = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
};

// Normal-quantile intervals when df is empty, otherwise Student t with the
// per-coefficient df (infinite df falls back to normal).
std::vector<OddsRatioRow> report_odds_ratios(const Eigen::VectorXd& beta,
                                             const Eigen::MatrixXd& variance,
                                             std::span<const std::string> names,
                                             double level = 0.95,
                                             const Eigen::VectorXd& df = {},
                                             bool include_intercept = false);

}  // namespace propweight
