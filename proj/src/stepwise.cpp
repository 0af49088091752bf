#include <algorithm>
#include <limits>

#include "propweight/error.hpp"
#include "propweight/logistic.hpp"

namespace propweight {

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& X, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(cols[k]));
  return out;
}

}  // namespace

StepwiseResult fit_logistic_stepwise(const DesignMatrix& candidates, std::span<const double> y,
                                     const StepwiseOptions& options) {
  const auto& X = candidates.values;
  const auto& terms = candidates.spec.terms();
  if (X.cols() == 0 || terms.empty() || !terms.front().features.empty())
    fail(ErrorKind::InvalidArgument, "stepwise candidates must start with the intercept column");

  StepwiseResult result;
  result.selected = {0};
  result.fit = fit_logistic_irls(gather_columns(X, result.selected), y, {}, options.irls);
  double current_aic = aic(1, result.fit.log_likelihood);
  result.trace.push_back({terms.front().name, current_aic});

  std::vector<bool> in_model(terms.size(), false);
  in_model[0] = true;

  for (int step = 0; options.max_steps < 0 || step < options.max_steps; ++step) {
    double best_aic = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    LogisticFit best_fit;
    const Eigen::Index k = static_cast<Eigen::Index>(result.selected.size());
    Eigen::VectorXd start(k + 1);
    start.head(k) = result.fit.coef;
    start(k) = 0.0;

    std::vector<std::size_t> cols = result.selected;
    cols.push_back(0);
    Eigen::MatrixXd Xc = gather_columns(X, cols);

    for (std::size_t c = 1; c < terms.size(); ++c) {
      if (in_model[c]) continue;
      if (options.hierarchy &&
          !std::all_of(terms[c].parents.begin(), terms[c].parents.end(),
                       [&](int p) { return in_model[static_cast<std::size_t>(p)]; }))
        continue;
      Xc.col(k) = X.col(static_cast<Eigen::Index>(c));
      try {
        auto fit = fit_logistic_irls(Xc, y, {}, options.irls, &start);
        const double candidate_aic = aic(static_cast<int>(k + 1), fit.log_likelihood);
        if (candidate_aic < best_aic) {
          best_aic = candidate_aic;
          best = c;
          best_fit = std::move(fit);
        }
      } catch (const Error& e) {
        result.skipped.push_back(terms[c].name + ": " + std::string(to_string(e.kind())));
      }
    }
    if (best == 0 || !(best_aic < current_aic)) break;
    result.selected.push_back(best);
    in_model[best] = true;
    result.fit = std::move(best_fit);
    current_aic = best_aic;
    result.trace.push_back({terms[best].name, current_aic});
  }
  return result;
}

}  // namespace propweight
