#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "propweight/data.hpp"
#include "propweight/design.hpp"
#include "propweight/error.hpp"
#include "propweight/membership.hpp"
#include "propweight/outcome.hpp"

namespace propweight {

struct OutcomeSpec {
  std::string response;                 // binary 0/1 column of the convenience table
  std::vector<std::string> covariates;  // main effects
};

// Outcome vector: continuous columns must be 0/1; a two-level categorical is
// coded 1 for its non-reference level.
std::vector<double> binary_response(const DataTable& table, std::string_view column);

struct VarianceRequest {
  bool model = false;
  bool design = true;
  bool proposed = false;
};

struct PipelineConfig {
  WeightingConfig weighting;
  OutcomeSpec outcome;
  VarianceRequest variance;
  CrossTermForm cross_term = CrossTermForm::per_unit;
  double max_weight_ratio = 1e6;
};

// Throws UnsupportedForProposedVariance when the proposed variance is asked
// for with a weight model that has no logistic parametrisation.
void validate_pipeline(const PipelineConfig& config);

enum class FailureKind {
  weight_separation,
  outcome_separation,
  eb_infeasible,
  extreme_weights,
  weight_fit,
  outcome_fit,
};

std::string_view to_string(FailureKind kind);

class PipelineError : public Error {
 public:
  PipelineError(FailureKind failure, const Error& cause)
      : Error(cause.kind(), cause.what()), failure_(failure) {}

  FailureKind failure() const noexcept { return failure_; }

 private:
  FailureKind failure_;
};

struct PipelineResult {
  WeightingResult weighting;
  DesignSpec outcome_design;
  Eigen::MatrixXd outcome_matrix;
  WeightedFit fit;
  std::vector<VarianceEstimate> variances;  // in the order model, design, proposed
  std::vector<std::string> warnings;

  std::vector<std::string> coefficient_names() const { return outcome_design.column_names(); }
  const VarianceEstimate* variance(VarianceKind kind) const;
};

// combine -> weight estimation -> weighted outcome fit -> requested
// variances. The outcome design is fitted on the convenience rows unless a
// fixed one is given (bootstrap replicates reuse the original columns).
PipelineResult run_pipeline(const DataTable& convenience, const DataTable& representative,
                            const PipelineConfig& config, Execution policy = Execution::parallel,
                            const DesignSpec* outcome_design = nullptr);

}  // namespace propweight
