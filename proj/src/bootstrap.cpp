#include "propweight/bootstrap.hpp"

#include <optional>

namespace propweight {

namespace {

void check_strata(const DataTable& table, const std::string& strata) {
  if (strata.empty()) return;
  const auto col = table.column_index(strata);
  if (!table.spec(col).is_categorical())
    fail(ErrorKind::InvalidArgument, "stratification variable '" + strata + "' must be categorical");
}

}  // namespace

std::vector<std::size_t> stratified_resample_indices(const DataTable& table,
                                                     const std::string& strata, Rng& rng) {
  const std::size_t n = table.rows();
  std::vector<std::size_t> out(n);
  if (strata.empty()) {
    for (auto& i : out) i = uniform_index(rng, n);
    return out;
  }
  check_strata(table, strata);
  const auto& codes = table.codes(strata);
  std::vector<std::vector<std::size_t>> members(table.spec(table.column_index(strata)).levels.size());
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(codes[i])].push_back(i);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pool = members[static_cast<std::size_t>(codes[i])];
    out[i] = pool[uniform_index(rng, pool.size())];
  }
  return out;
}

DataTable stratified_resample(const DataTable& table, const std::string& strata, Rng& rng) {
  const auto idx = stratified_resample_indices(table, strata, rng);
  return table.select_rows(idx);
}

BootstrapResult bootstrap_pipeline(const DataTable& convenience, const DataTable& representative,
                                   const PipelineConfig& config, const BootstrapConfig& bootstrap,
                                   Execution policy, const DesignSpec* outcome_design) {
  if (bootstrap.n_replicates < 0) fail(ErrorKind::InvalidArgument, "n_replicates must be non-negative");
  check_strata(convenience, bootstrap.strata_variable);
  if (bootstrap.resample_representative) check_strata(representative, bootstrap.strata_variable);

  BootstrapResult result;
  result.n_replicates = bootstrap.n_replicates;
  if (bootstrap.n_replicates == 0) return result;

  std::optional<DesignSpec> fixed;
  if (!outcome_design) {
    fixed = run_pipeline(convenience, representative, config, policy).outcome_design;
    outcome_design = &*fixed;
  }

  const auto n = static_cast<std::size_t>(bootstrap.n_replicates);
  std::vector<std::optional<Eigen::VectorXd>> betas(n);
  std::vector<std::optional<ReplicateFailure>> failures(n);
  const Execution inner = policy == Execution::parallel ? Execution::serial : policy;
  for_each_index(n, policy, [&](std::size_t r) {
    Rng rng = make_stream(bootstrap.seed, r);
    const DataTable conv = stratified_resample(convenience, bootstrap.strata_variable, rng);
    const DataTable rep = bootstrap.resample_representative
                              ? stratified_resample(representative, bootstrap.strata_variable, rng)
                              : representative;
    PipelineConfig replicate = config;
    replicate.variance = {false, false, false};
    replicate.weighting.forest.seed = derive_seed(config.weighting.forest.seed, r, 1);
    try {
      betas[r] = run_pipeline(conv, rep, replicate, inner, outcome_design).fit.beta;
    } catch (const PipelineError& e) {
      failures[r] = ReplicateFailure{r, e.failure(), e.what()};
    }
  });

  for (std::size_t r = 0; r < n; ++r) {
    if (betas[r]) {
      result.replicate_betas.push_back(std::move(*betas[r]));
      result.replicate_index.push_back(r);
    } else {
      result.failures.push_back(std::move(*failures[r]));
    }
  }
  result.n_failed = result.failures.size();
  if (result.replicate_betas.empty())
    fail(ErrorKind::AllReplicatesFailed, "all " + std::to_string(n) + " bootstrap replicates failed");
  return result;
}

VarianceEstimate bootstrap_variance(const BootstrapResult& result) {
  const auto& b = result.replicate_betas;
  if (b.size() < 2)
    fail(ErrorKind::InsufficientReplicates, "bootstrap variance needs at least two successful replicates");
  const auto p = b.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& v : b) mean += v;
  mean /= static_cast<double>(b.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  for (const auto& v : b) cov += (v - mean) * (v - mean).transpose();
  cov /= static_cast<double>(b.size() - 1);
  VarianceEstimate out;
  out.kind = VarianceKind::bootstrap;
  out.matrix = 0.5 * (cov + cov.transpose());
  if (result.n_failed > 0)
    out.warnings.push_back(std::to_string(result.n_failed) + " bootstrap replicates failed and were excluded");
  return out;
}

}  // namespace propweight
