#include "propweight/entropy_balancing.hpp"

#include <cmath>

#include "propweight/error.hpp"

namespace propweight {

namespace {

struct DualState {
  double value = 0.0;
  Eigen::VectorXd weights;
  Eigen::VectorXd gradient;
};

DualState evaluate_dual(const Eigen::MatrixXd& centered, const Eigen::VectorXd& log_base,
                        const Eigen::VectorXd& lambda) {
  DualState s;
  const Eigen::VectorXd logits = log_base + centered * lambda;
  const double top = logits.maxCoeff();
  s.weights = (logits.array() - top).exp();
  const double total = s.weights.sum();
  s.value = top + std::log(total);
  s.weights /= total;
  s.gradient = centered.transpose() * s.weights;
  return s;
}

}  // namespace

EbFit fit_entropy_balancing(const Eigen::MatrixXd& moments, const Eigen::VectorXd& targets,
                            const Eigen::VectorXd& base, const EbOptions& options) {
  const auto n = moments.rows();
  const auto k = moments.cols();
  if (n == 0) fail(ErrorKind::InvalidArgument, "entropy balancing needs at least one unit");
  if (targets.size() != k) fail(ErrorKind::DimensionMismatch, "one target per moment column");
  if (!moments.allFinite() || !targets.allFinite())
    fail(ErrorKind::Infeasible, "non-finite moments or targets");

  EbFit fit;
  fit.base = base.size() == 0 ? Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)) : base;
  if (fit.base.size() != n) fail(ErrorKind::DimensionMismatch, "one base weight per unit");
  if ((fit.base.array() <= 0.0).any() || !fit.base.allFinite())
    fail(ErrorKind::InvalidArgument, "base weights must be positive");
  fit.base /= fit.base.sum();

  // Columns with no spread in the sample carry no information; they are
  // either already satisfied or impossible to satisfy.
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double lo = moments.col(j).minCoeff();
    const double hi = moments.col(j).maxCoeff();
    const double span = hi - lo;
    const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
    if (targets(j) < lo - options.constraint_tolerance || targets(j) > hi + options.constraint_tolerance)
      fail(ErrorKind::Infeasible, "moment target " + std::to_string(j) +
                                      " lies outside the convenience sample's range");
    if (span <= 1e-12 * scale) {
      if (std::abs(targets(j) - lo) > options.constraint_tolerance)
        fail(ErrorKind::Infeasible, "constant moment column cannot reach its target");
      continue;
    }
    active.push_back(j);
  }

  const auto ka = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd centered(n, ka);
  for (Eigen::Index a = 0; a < ka; ++a)
    centered.col(a) = moments.col(active[a]).array() - targets(active[a]);
  const Eigen::VectorXd log_base = fit.base.array().log();

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(ka);
  DualState state = evaluate_dual(centered, log_base, lambda);
  const double goal = options.constraint_tolerance * 1e-3;
  int iter = 0;
  for (; iter < options.max_iterations && ka > 0; ++iter) {
    if (state.gradient.cwiseAbs().maxCoeff() < goal) break;
    const Eigen::MatrixXd weighted = centered.array().colwise() * state.weights.array().sqrt();
    Eigen::MatrixXd hessian = weighted.transpose() * weighted - state.gradient * state.gradient.transpose();
    const Eigen::VectorXd direction = -hessian.completeOrthogonalDecomposition().solve(state.gradient);
    if (!direction.allFinite()) break;
    const double slope = state.gradient.dot(direction);
    double t = 1.0;
    bool moved = false;
    for (int half = 0; half < 60; ++half, t *= 0.5) {
      DualState trial = evaluate_dual(centered, log_base, lambda + t * direction);
      if (std::isfinite(trial.value) && trial.value <= state.value + 1e-4 * t * slope) {
        lambda += t * direction;
        state = std::move(trial);
        moved = true;
        break;
      }
    }
    if (!moved) break;
    if (lambda.cwiseAbs().maxCoeff() > options.lambda_limit) break;
  }

  fit.iterations = iter;
  fit.lambda = Eigen::VectorXd::Zero(k);
  for (Eigen::Index a = 0; a < ka; ++a) fit.lambda(active[a]) = lambda(a);
  fit.weights = state.weights;
  fit.dual_objective = state.value;
  fit.constraint_residuals = moments.transpose() * fit.weights - targets;
  const double worst = k > 0 ? fit.constraint_residuals.cwiseAbs().maxCoeff() : 0.0;
  if (!(worst < options.constraint_tolerance))
    fail(ErrorKind::Infeasible, "entropy balancing constraints unmet (max residual " +
                                    std::to_string(worst) + ")");
  if ((fit.weights.array() <= 0.0).any())
    fail(ErrorKind::Infeasible, "entropy balancing produced zero weights");
  return fit;
}

MomentBasis MomentBasis::fit(const DataTable& reference, std::span<const std::string> variables,
                             int max_degree) {
  if (max_degree < 1) fail(ErrorKind::InvalidArgument, "moment degree must be at least 1");
  if (reference.rows() == 0) fail(ErrorKind::InvalidArgument, "empty reference sample");
  MomentBasis basis;
  basis.max_degree_ = max_degree;
  for (const auto& name : variables) {
    const auto& spec = reference.spec(reference.column_index(name));
    basis.variables_.push_back(spec);
    if (spec.is_categorical()) {
      for (int level = 0; level < static_cast<int>(spec.levels.size()); ++level)
        if (level != spec.reference_index())
          basis.columns_.push_back({name + ":" + spec.levels[level], name, level, 1, 0.0, 1.0});
      continue;
    }
    const auto& x = reference.numeric(name);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(x.size()));
    if (!(sd > 0.0)) sd = 1.0;
    for (int d = 1; d <= max_degree; ++d)
      basis.columns_.push_back({d == 1 ? name : name + "^" + std::to_string(d), name, -1, d, mean, sd});
  }
  return basis;
}

Eigen::MatrixXd MomentBasis::apply(const DataTable& data) const {
  const auto n = static_cast<Eigen::Index>(data.rows());
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& col = columns_[c];
    const auto idx = data.column_index(col.variable);
    const auto& spec = data.spec(idx);
    const auto it = std::find_if(variables_.begin(), variables_.end(),
                                 [&](const VariableSpec& v) { return v.name == col.variable; });
    if (it == variables_.end() || *it != spec)
      fail(ErrorKind::SchemaMismatch, "variable '" + col.variable + "' does not match the moment basis");
    auto dst = out.col(static_cast<Eigen::Index>(c));
    if (col.level >= 0) {
      const auto& codes = data.codes(idx);
      for (Eigen::Index i = 0; i < n; ++i) dst(i) = codes[i] == col.level ? 1.0 : 0.0;
    } else {
      const auto& x = data.numeric(idx);
      for (Eigen::Index i = 0; i < n; ++i) dst(i) = std::pow((x[i] - col.center) / col.scale, col.degree);
    }
  }
  return out;
}

Eigen::VectorXd MomentBasis::targets(const DataTable& reference) const {
  return apply(reference).colwise().mean().transpose();
}

nlohmann::json MomentBasis::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns_)
    cols.push_back({{"name", c.name}, {"variable", c.variable}, {"level", c.level},
                    {"degree", c.degree}, {"center", c.center}, {"scale", c.scale}});
  return {{"max_degree", max_degree_},
          {"variables", schema_to_json(variables_)["variables"]},
          {"columns", cols}};
}

MomentBasis MomentBasis::from_json(const nlohmann::json& doc) {
  MomentBasis basis;
  basis.max_degree_ = doc.at("max_degree").get<int>();
  basis.variables_ = schema_from_json({{"variables", doc.at("variables")}});
  for (const auto& c : doc.at("columns"))
    basis.columns_.push_back({c.at("name").get<std::string>(), c.at("variable").get<std::string>(),
                              c.at("level").get<int>(), c.at("degree").get<int>(),
                              c.at("center").get<double>(), c.at("scale").get<double>()});
  return basis;
}

}  // namespace propweight
