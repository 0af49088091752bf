#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "propweight/data.hpp"

namespace propweight {

struct EbOptions {
  int max_iterations = 200;
  double constraint_tolerance = 1e-8;
  double lambda_limit = 1e4;
};

struct EbFit {
  Eigen::VectorXd weights;  // sum to one
  Eigen::VectorXd lambda;   // dual multipliers, one per moment column
  Eigen::VectorXd base;     // normalised base weights
  Eigen::VectorXd constraint_residuals;  // sum_i w_i f_ij - target_j
  double dual_objective = 0.0;
  int iterations = 0;
};

// Minimises sum_i w_i log(w_i / b_i) subject to sum_i w_i f_i = targets,
// sum_i w_i = 1, w > 0, by Newton on the convex dual
//   L(lambda) = log sum_i b_i exp(lambda'(f_i - targets)).
// An empty base means uniform 1/n. Throws Infeasible when the dual diverges.
EbFit fit_entropy_balancing(const Eigen::MatrixXd& moments, const Eigen::VectorXd& targets,
                            const Eigen::VectorXd& base = {}, const EbOptions& options = {});

// Moment functions f(x) for a set of covariates: powers 1..D of each
// continuous covariate (after centring and scaling by the reference sample's
// mean and SD) and the non-reference indicators of each categorical. Matching
// the standardised powers is equivalent to matching the raw powers because
// the weights sum to one.
class MomentBasis {
 public:
  struct Column {
    std::string name;
    std::string variable;
    int level = -1;  // categorical indicator level
    int degree = 1;
    double center = 0.0;
    double scale = 1.0;
  };

  static MomentBasis fit(const DataTable& reference, std::span<const std::string> variables,
                         int max_degree);

  Eigen::MatrixXd apply(const DataTable& data) const;
  // Unweighted reference means of the moment columns.
  Eigen::VectorXd targets(const DataTable& reference) const;

  const std::vector<Column>& columns() const { return columns_; }
  int max_degree() const { return max_degree_; }

  nlohmann::json to_json() const;
  static MomentBasis from_json(const nlohmann::json& doc);

 private:
  Schema variables_;
  std::vector<Column> columns_;
  int max_degree_ = 1;
};

}  // namespace propweight
