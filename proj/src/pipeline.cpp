#include "propweight/pipeline.hpp"

#include <algorithm>

namespace propweight {

std::vector<double> binary_response(const DataTable& table, std::string_view column) {
  const auto col = table.column_index(column);
  const auto& spec = table.spec(col);
  std::vector<double> y(table.rows());
  if (spec.kind == VariableKind::categorical) {
    if (spec.levels.size() != 2)
      fail(ErrorKind::InvalidArgument, "response '" + spec.name + "' must have exactly two levels");
    const int ref = static_cast<int>(spec.reference_index());
    const auto& codes = table.codes(col);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = codes[i] == ref ? 0.0 : 1.0;
    return y;
  }
  const auto& values = table.numeric(col);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (values[i] != 0.0 && values[i] != 1.0)
      fail(ErrorKind::InvalidArgument, "response '" + spec.name + "' must be binary 0/1");
    y[i] = values[i];
  }
  return y;
}

void validate_pipeline(const PipelineConfig& config) {
  if (config.outcome.response.empty()) fail(ErrorKind::ConfigError, "outcome response is not set");
  if (config.weighting.covariates.empty()) fail(ErrorKind::ConfigError, "no weight-model covariates");
  const auto m = config.weighting.method;
  if (config.variance.proposed && m != WeightMethod::logistic && m != WeightMethod::cbps)
    fail(ErrorKind::UnsupportedForProposedVariance,
         "proposed variance needs a logistic or cbps weight model, not " + std::string(to_string(m)));
  if (!(config.max_weight_ratio > 1.0)) fail(ErrorKind::ConfigError, "max_weight_ratio must exceed 1");
}

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::weight_separation: return "weight_separation";
    case FailureKind::outcome_separation: return "outcome_separation";
    case FailureKind::eb_infeasible: return "eb_infeasible";
    case FailureKind::extreme_weights: return "extreme_weights";
    case FailureKind::weight_fit: return "weight_fit";
    case FailureKind::outcome_fit: return "outcome_fit";
  }
  return "weight_fit";
}

const VarianceEstimate* PipelineResult::variance(VarianceKind kind) const {
  for (const auto& v : variances)
    if (v.kind == kind) return &v;
  return nullptr;
}

PipelineResult run_pipeline(const DataTable& convenience, const DataTable& representative,
                            const PipelineConfig& config, Execution policy,
                            const DesignSpec* outcome_design) {
  validate_pipeline(config);
  const auto y = binary_response(convenience, config.outcome.response);
  const CombinedSample combined = combine(convenience, representative, config.weighting.covariates);

  PipelineResult out;
  try {
    out.weighting = estimate_weights(combined, config.weighting, policy);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Separation) throw PipelineError(FailureKind::weight_separation, e);
    if (e.kind() == ErrorKind::Infeasible && config.weighting.method == WeightMethod::entropy_balancing)
      throw PipelineError(FailureKind::eb_infeasible, e);
    throw PipelineError(FailureKind::weight_fit, e);
  }
  const auto& w = out.weighting.weights.values;
  const double ratio = w.maxCoeff() / w.minCoeff();
  if (!(ratio <= config.max_weight_ratio))
    throw PipelineError(FailureKind::extreme_weights,
                        Error(ErrorKind::ExtremeWeights,
                              "max/min weight ratio " + std::to_string(ratio) + " exceeds limit"));

  try {
    out.outcome_design = outcome_design
                             ? *outcome_design
                             : DesignSpec::fit(convenience, config.outcome.covariates, Expansion::main_effects);
    out.outcome_matrix = out.outcome_design.apply(convenience);
    out.fit = fit_weighted_glm(out.outcome_matrix, y,
                               {w.data(), static_cast<std::size_t>(w.size())}, config.weighting.irls);
  } catch (const Error& e) {
    throw PipelineError(e.kind() == ErrorKind::Separation ? FailureKind::outcome_separation
                                                          : FailureKind::outcome_fit,
                        e);
  }

  try {
    if (config.variance.model) out.variances.push_back(model_variance(out.fit, out.outcome_matrix));
    if (config.variance.design) out.variances.push_back(design_variance(out.fit, out.outcome_matrix));
    if (config.variance.proposed) {
      const auto method = out.weighting.model.method;
      const Eigen::VectorXd gamma =
          method == WeightMethod::logistic
              ? std::get<LogisticPayload>(out.weighting.model.payload).coef
              : std::get<CbpsPayload>(out.weighting.model.payload).coef;
      const auto components = stacked_components(out.fit, out.outcome_matrix, out.weighting.design,
                                                 combined.membership, gamma, config.cross_term);
      auto v = proposed_variance(components);
      if (method == WeightMethod::cbps)
        v.warnings.push_back("proposed variance with cbps weights treats gamma as a logistic MLE (approximate)");
      out.warnings.insert(out.warnings.end(), v.warnings.begin(), v.warnings.end());
      out.variances.push_back(std::move(v));
    }
  } catch (const Error& e) {
    throw PipelineError(FailureKind::outcome_fit, e);
  }
  return out;
}

}  // namespace propweight
