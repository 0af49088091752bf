#pragma once

#include <span>

#include <Eigen/Dense>

namespace propweight {

struct CbpsOptions {
  // Stack the control-reweighting balance moments on top of the score
  // moments. Off gives the exactly identified score-only problem.
  bool balance_moments = true;
  int max_iterations = 200;
  double ridge = 1e-8;
  double tolerance = 1e-10;
};

struct CbpsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd fitted;             // membership probabilities
  Eigen::VectorXd balance_residuals;  // mean balance moments at the solution (empty if disabled)
  double objective = 0.0;             // second-step GMM quadratic form
  int iterations = 0;
};

// Per-unit moment vectors g_i(gamma), one row per unit: score moments
// (C_i - P_i) x_i, then (if enabled) balance moments
// [C_i (1 - P_i) / P_i - (1 - C_i)] x_i.
Eigen::MatrixXd cbps_moments(const Eigen::MatrixXd& X, std::span<const double> membership,
                             const Eigen::VectorXd& coef, bool balance_moments);

// Two-step GMM: identity weighting from the logistic MLE, then the inverse
// empirical moment covariance (ridge-stabilised) at the first-step solution.
// Each step minimises the quadratic form with damped Gauss-Newton.
CbpsFit fit_cbps(const Eigen::MatrixXd& X, std::span<const double> membership,
                 const CbpsOptions& options = {});

}  // namespace propweight
