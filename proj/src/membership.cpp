#include "propweight/membership.hpp"

#include <cmath>

#include "propweight/error.hpp"

namespace propweight {

std::string_view to_string(WeightMethod method) {
  switch (method) {
    case WeightMethod::logistic: return "logistic";
    case WeightMethod::cbps: return "cbps";
    case WeightMethod::entropy_balancing: return "entropy_balancing";
    case WeightMethod::random_forest: return "random_forest";
  }
  return "logistic";
}

WeightMethod weight_method_from_string(std::string_view text) {
  if (text == "logistic") return WeightMethod::logistic;
  if (text == "cbps") return WeightMethod::cbps;
  if (text == "eb" || text == "entropy_balancing") return WeightMethod::entropy_balancing;
  if (text == "rf" || text == "random_forest") return WeightMethod::random_forest;
  fail(ErrorKind::ConfigError, "unknown weight method '" + std::string(text) + "'");
}

std::string_view to_string(Normalization normalization) {
  switch (normalization) {
    case Normalization::sum_to_one: return "sum_to_one";
    case Normalization::mean_one: return "mean_one";
    case Normalization::raw: return "raw";
  }
  return "raw";
}

Normalization normalization_from_string(std::string_view text) {
  if (text == "sum_to_one") return Normalization::sum_to_one;
  if (text == "mean_one") return Normalization::mean_one;
  if (text == "raw") return Normalization::raw;
  fail(ErrorKind::ConfigError, "unknown normalization '" + std::string(text) + "'");
}

MembershipProbabilities trim_probabilities(MembershipProbabilities p, double lo, double hi) {
  for (auto& v : p.values) {
    if (v == 0.0)
      v = lo;
    else if (v == 1.0)
      v = hi;
  }
  return p;
}

PropensityWeights normalize_weights(Eigen::VectorXd raw, Normalization normalization) {
  if (raw.size() == 0) fail(ErrorKind::InvalidArgument, "no weights");
  if ((raw.array() <= 0.0).any() || !raw.allFinite())
    fail(ErrorKind::InvalidArgument, "weights must be positive and finite");
  switch (normalization) {
    case Normalization::sum_to_one: raw /= raw.sum(); break;
    case Normalization::mean_one: raw *= static_cast<double>(raw.size()) / raw.sum(); break;
    case Normalization::raw: break;
  }
  return PropensityWeights{std::move(raw), normalization};
}

PropensityWeights weights_from_probabilities(const MembershipProbabilities& p,
                                             Normalization normalization) {
  Eigen::VectorXd raw(p.values.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double v = p.values(i);
    if (!(v > 0.0 && v < 1.0))
      fail(ErrorKind::InvalidArgument, "membership probabilities must lie strictly inside (0, 1)");
    raw(i) = (1.0 - v) / v;
  }
  return normalize_weights(std::move(raw), normalization);
}

namespace {

Eigen::VectorXd expit_all(const Eigen::VectorXd& eta) {
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) p(i) = expit(eta(i));
  return p;
}

Eigen::MatrixXd forest_features(const DesignSpec& spec, const DataTable& rows) {
  const Eigen::MatrixXd full = spec.apply(rows);
  return full.rightCols(full.cols() - 1);
}

Eigen::VectorXd eb_weights(const EntropyPayload& eb, const DataTable& rows) {
  const Eigen::MatrixXd f = eb.basis.apply(rows);
  const Eigen::VectorXd centered = (f.rowwise() - eb.targets.transpose()) * eb.lambda;
  return (centered.array() + eb.log_scale).exp();
}

// Solve mean_i 1 / (1 + k w_i) = share for k > 0 by bisection on log k.
double probability_scale(const Eigen::VectorXd& w, double share) {
  auto mean_p = [&](double k) { return (1.0 / (1.0 + k * w.array())).mean(); };
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mean_p(std::exp(mid)) > share)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

MembershipProbabilities predict_probability(const MembershipModel& model, const DataTable& rows) {
  return std::visit(
      [&](const auto& payload) -> MembershipProbabilities {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, LogisticPayload> || std::is_same_v<T, CbpsPayload>) {
          return {expit_all(payload.design.apply(rows) * payload.coef)};
        } else if constexpr (std::is_same_v<T, EntropyPayload>) {
          const Eigen::VectorXd w = eb_weights(payload, rows);
          return {(1.0 / (1.0 + payload.probability_scale * w.array())).matrix()};
        } else {
          return trim_probabilities({payload.forest->predict(forest_features(payload.features, rows))});
        }
      },
      model.payload);
}

nlohmann::json model_to_json(const MembershipModel& model) {
  nlohmann::json doc{{"method", to_string(model.method)}, {"diagnostics", model.diagnostics}};
  std::visit(
      [&](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, LogisticPayload>) {
          doc["design"] = payload.design.to_json();
          doc["coefficients"] = to_std(payload.coef);
          doc["coefficient_names"] = payload.design.column_names();
          nlohmann::json trace = nlohmann::json::array();
          for (const auto& s : payload.trace) trace.push_back({{"added", s.added}, {"aic", s.aic}});
          doc["aic_trace"] = trace;
        } else if constexpr (std::is_same_v<T, CbpsPayload>) {
          doc["design"] = payload.design.to_json();
          doc["coefficients"] = to_std(payload.coef);
          doc["coefficient_names"] = payload.design.column_names();
          doc["balance_residuals"] = to_std(payload.balance_residuals);
        } else if constexpr (std::is_same_v<T, EntropyPayload>) {
          doc["moment_basis"] = payload.basis.to_json();
          doc["lambda"] = to_std(payload.lambda);
          doc["targets"] = to_std(payload.targets);
          doc["log_scale"] = payload.log_scale;
          doc["probability_scale"] = payload.probability_scale;
        } else {
          doc["features"] = payload.features.to_json();
          doc["forest"] = payload.forest->to_json();
        }
      },
      model.payload);
  return doc;
}

MembershipModel model_from_json(const nlohmann::json& doc) {
  MembershipModel model;
  model.method = weight_method_from_string(doc.at("method").get<std::string>());
  model.diagnostics = doc.value("diagnostics", nlohmann::json::object());
  switch (model.method) {
    case WeightMethod::logistic: {
      LogisticPayload p{DesignSpec::from_json(doc.at("design")), vector_from_json(doc.at("coefficients")), {}};
      for (const auto& s : doc.value("aic_trace", nlohmann::json::array()))
        p.trace.push_back({s.at("added").get<std::string>(), s.at("aic").get<double>()});
      model.payload = std::move(p);
      break;
    }
    case WeightMethod::cbps:
      model.payload = CbpsPayload{DesignSpec::from_json(doc.at("design")),
                                  vector_from_json(doc.at("coefficients")),
                                  vector_from_json(doc.value("balance_residuals", nlohmann::json::array()))};
      break;
    case WeightMethod::entropy_balancing:
      model.payload = EntropyPayload{MomentBasis::from_json(doc.at("moment_basis")),
                                     vector_from_json(doc.at("lambda")),
                                     vector_from_json(doc.at("targets")),
                                     doc.at("log_scale").get<double>(),
                                     doc.at("probability_scale").get<double>()};
      break;
    case WeightMethod::random_forest:
      model.payload = ForestPayload{DesignSpec::from_json(doc.at("features")),
                                    std::make_shared<const RandomForest>(RandomForest::from_json(doc.at("forest")))};
      break;
  }
  return model;
}

WeightingResult estimate_weights(const CombinedSample& sample, const WeightingConfig& config,
                                 Execution policy) {
  if (sample.n_conv == 0 || sample.n_rep == 0)
    fail(ErrorKind::InvalidArgument, "both samples must be non-empty");
  const auto& covariates = config.covariates;
  const auto& C = sample.membership;
  WeightingResult result;
  result.model.method = config.method;

  switch (config.method) {
    case WeightMethod::logistic: {
      LogisticPayload payload;
      if (config.stepwise) {
        const auto candidates = build_design_matrix(sample.data, covariates, Expansion::second_order);
        StepwiseOptions options;
        options.irls = config.irls;
        auto step = fit_logistic_stepwise(candidates, C, options);
        payload.design = candidates.spec.subset(step.selected);
        payload.coef = step.fit.coef;
        payload.trace = step.trace;
        result.model.diagnostics["log_likelihood"] = step.fit.log_likelihood;
        result.model.diagnostics["aic"] = step.trace.back().aic;
        result.model.diagnostics["skipped_candidates"] = step.skipped;
      } else {
        auto design = build_design_matrix(sample.data, covariates, Expansion::main_effects);
        auto fit = fit_logistic_irls(design.values, C, {}, config.irls);
        payload.design = std::move(design.spec);
        payload.coef = fit.coef;
        result.model.diagnostics["log_likelihood"] = fit.log_likelihood;
        result.model.diagnostics["aic"] = aic(static_cast<int>(fit.coef.size()), fit.log_likelihood);
      }
      result.design = payload.design.apply(sample.data);
      result.probabilities.values = expit_all(result.design * payload.coef);
      result.model.payload = std::move(payload);
      break;
    }
    case WeightMethod::cbps: {
      auto design = build_design_matrix(sample.data, covariates, Expansion::orthogonal_poly2);
      auto fit = fit_cbps(design.values, C, config.cbps);
      result.model.diagnostics["gmm_objective"] = fit.objective;
      result.model.diagnostics["iterations"] = fit.iterations;
      result.design = std::move(design.values);
      result.probabilities.values = fit.fitted;
      result.model.payload = CbpsPayload{std::move(design.spec), fit.coef, fit.balance_residuals};
      break;
    }
    case WeightMethod::entropy_balancing: {
      std::vector<std::size_t> conv_rows(sample.n_conv), rep_rows(sample.n_rep);
      for (std::size_t i = 0; i < sample.n_conv; ++i) conv_rows[i] = i;
      for (std::size_t i = 0; i < sample.n_rep; ++i) rep_rows[i] = sample.n_conv + i;
      const DataTable conv = sample.data.select_rows(conv_rows);
      const DataTable rep = sample.data.select_rows(rep_rows);
      EntropyPayload payload{MomentBasis::fit(rep, covariates, config.eb_degree), {}, {}, 0.0, 1.0};
      payload.targets = payload.basis.targets(rep);
      const auto fit = fit_entropy_balancing(payload.basis.apply(conv), payload.targets);
      payload.lambda = fit.lambda;
      // w_i = b_i exp(lambda'(f_i - t)) / Z with uniform b; recover log(b / Z).
      const Eigen::VectorXd centered = (payload.basis.apply(conv).rowwise() - payload.targets.transpose()) * payload.lambda;
      payload.log_scale = std::log(fit.weights(0)) - centered(0);
      const double share = static_cast<double>(sample.n_conv) / static_cast<double>(sample.rows());
      payload.probability_scale = probability_scale(fit.weights, share);
      result.model.diagnostics["dual_objective"] = fit.dual_objective;
      result.model.diagnostics["iterations"] = fit.iterations;
      result.model.diagnostics["max_constraint_residual"] =
          fit.constraint_residuals.size() ? fit.constraint_residuals.cwiseAbs().maxCoeff() : 0.0;
      result.model.payload = payload;
      result.probabilities = predict_probability(result.model, sample.data);
      result.weights = normalize_weights(fit.weights, config.normalization);
      return result;
    }
    case WeightMethod::random_forest: {
      auto spec = DesignSpec::fit(sample.data, covariates, Expansion::main_effects);
      const Eigen::MatrixXd features = forest_features(spec, sample.data);
      auto forest = std::make_shared<const RandomForest>(fit_random_forest(features, C, config.forest, policy));
      Eigen::VectorXd raw = forest->predict(features);
      if (config.forest_out_of_bag) {
        const auto& oob = forest->oob_probability();
        for (Eigen::Index i = 0; i < raw.size(); ++i)
          if (!std::isnan(oob(i))) raw(i) = oob(i);
      }
      result.probabilities = trim_probabilities({raw});
      result.model.diagnostics["oob_error"] = forest->oob_error();
      result.model.payload = ForestPayload{std::move(spec), std::move(forest)};
      break;
    }
  }

  MembershipProbabilities conv_p{result.probabilities.values.head(static_cast<Eigen::Index>(sample.n_conv))};
  result.weights = weights_from_probabilities(conv_p, config.normalization);
  return result;
}

}  // namespace propweight
