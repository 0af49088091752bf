#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "propweight/data.hpp"
#include "propweight/outcome.hpp"
#include "propweight/parallel.hpp"
#include "propweight/pipeline.hpp"
#include "propweight/rng.hpp"

namespace propweight {

// Row indices of a with-replacement resample that keeps every stratum's size.
// Position i of the output is drawn from the stratum of row i. An empty
// strata name means a single stratum.
std::vector<std::size_t> stratified_resample_indices(const DataTable& table,
                                                     const std::string& strata, Rng& rng);

DataTable stratified_resample(const DataTable& table, const std::string& strata, Rng& rng);

struct BootstrapConfig {
  int n_replicates = 200;
  std::string strata_variable;  // categorical column present in both samples; empty: none
  std::uint64_t seed = kDefaultSeed;
  bool resample_representative = true;
};

struct ReplicateFailure {
  std::size_t replicate = 0;
  FailureKind kind = FailureKind::weight_fit;
  std::string message;
};

struct BootstrapResult {
  int n_replicates = 0;
  std::vector<Eigen::VectorXd> replicate_betas;  // successful replicates, by index
  std::vector<std::size_t> replicate_index;
  std::size_t n_failed = 0;
  std::vector<ReplicateFailure> failures;
};

// Re-runs weight estimation and the outcome fit on each replicate. Replicate
// r draws from make_stream(seed, r), so results do not depend on scheduling.
// Only PipelineError failures are excluded; anything else propagates.
BootstrapResult bootstrap_pipeline(const DataTable& convenience, const DataTable& representative,
                                   const PipelineConfig& config, const BootstrapConfig& bootstrap,
                                   Execution policy = Execution::parallel,
                                   const DesignSpec* outcome_design = nullptr);

// Sample covariance of the successful replicates (divisor n - 1).
VarianceEstimate bootstrap_variance(const BootstrapResult& result);

}  // namespace propweight
