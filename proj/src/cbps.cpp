#include "propweight/cbps.hpp"

#include <cmath>
#include <vector>

#include "propweight/error.hpp"
#include "propweight/logistic.hpp"

namespace propweight {

Eigen::MatrixXd cbps_moments(const Eigen::MatrixXd& X, std::span<const double> membership,
                             const Eigen::VectorXd& coef, bool balance_moments) {
  const auto n = X.rows();
  const auto m = X.cols();
  Eigen::MatrixXd g(n, balance_moments ? 2 * m : m);
  const Eigen::VectorXd eta = X * coef;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = membership[static_cast<std::size_t>(i)];
    const double p = expit(eta(i));
    g.row(i).head(m) = (c - p) * X.row(i);
    if (balance_moments) g.row(i).tail(m) = (c * std::exp(-eta(i)) - (1.0 - c)) * X.row(i);
  }
  return g;
}

namespace {

struct GmmState {
  Eigen::VectorXd gbar;
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd eta;
  double objective = 0.0;
};

GmmState evaluate(const Eigen::MatrixXd& X, std::span<const double> membership,
                  const Eigen::VectorXd& coef, bool balance, const Eigen::MatrixXd& W) {
  const auto n = X.rows();
  const auto m = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  GmmState s;
  s.gbar = cbps_moments(X, membership, coef, balance).colwise().sum().transpose() * inv_n;
  s.eta = X * coef;
  Eigen::VectorXd d_score(n), d_balance(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = expit(s.eta(i));
    d_score(i) = p * (1.0 - p);
    d_balance(i) = membership[static_cast<std::size_t>(i)] * std::exp(-s.eta(i));
  }
  s.jacobian.resize(balance ? 2 * m : m, m);
  s.jacobian.topRows(m) = -inv_n * X.transpose() * (X.array().colwise() * d_score.array()).matrix();
  if (balance)
    s.jacobian.bottomRows(m) =
        -inv_n * X.transpose() * (X.array().colwise() * d_balance.array()).matrix();
  s.objective = s.gbar.dot(W * s.gbar);
  return s;
}

// Half the Hessian of gbar' W gbar: J'WJ plus the curvature of the moments
// contracted with W gbar.
Eigen::MatrixXd half_hessian(const Eigen::MatrixXd& X, std::span<const double> membership,
                             const GmmState& s, bool balance, const Eigen::MatrixXd& W) {
  const auto n = X.rows();
  const auto m = X.cols();
  const Eigen::VectorXd v = W * s.gbar;
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = expit(s.eta(i));
    const double c = membership[static_cast<std::size_t>(i)];
    double h = -p * (1.0 - p) * (1.0 - 2.0 * p) * X.row(i).dot(v.head(m));
    if (balance) h += c * std::exp(-s.eta(i)) * X.row(i).dot(v.tail(m));
    r(i) = h / static_cast<double>(n);
  }
  return s.jacobian.transpose() * W * s.jacobian + X.transpose() * (X.array().colwise() * r.array()).matrix();
}

// Newton on gbar' W gbar with a backtracking line search, falling back to
// damped Gauss-Newton where the Hessian is not positive definite.
Eigen::VectorXd minimise(const Eigen::MatrixXd& X, std::span<const double> membership,
                         Eigen::VectorXd coef, bool balance, const Eigen::MatrixXd& W,
                         const CbpsOptions& options, int& iterations) {
  GmmState state = evaluate(X, membership, coef, balance, W);
  const auto m = X.cols();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    ++iterations;
    if (state.objective == 0.0) return coef;
    const Eigen::MatrixXd JtW = state.jacobian.transpose() * W;
    const Eigen::VectorXd gradient = JtW * state.gbar;
    const Eigen::MatrixXd normal = JtW * state.jacobian;
    const double scale = std::sqrt(normal.diagonal().sum() / static_cast<double>(m)) + 1e-300;
    if (gradient.cwiseAbs().maxCoeff() <= 1e-12 * scale * (1.0 + std::sqrt(state.objective))) return coef;

    std::vector<Eigen::VectorXd> directions;
    Eigen::LDLT<Eigen::MatrixXd> newton(half_hessian(X, membership, state, balance, W));
    if (newton.info() == Eigen::Success && newton.isPositive() && (newton.vectorD().array() > 0.0).all()) {
      const Eigen::VectorXd step = -newton.solve(gradient);
      if (step.allFinite()) directions.push_back(step);
    }
    for (double damping : {0.0, 1e-4, 1e-2, 1.0}) {
      Eigen::MatrixXd lhs = normal;
      lhs.diagonal().array() += damping * normal.diagonal().array().max(1e-300);
      const Eigen::VectorXd step = -lhs.ldlt().solve(gradient);
      if (step.allFinite()) directions.push_back(step);
    }

    bool accepted = false;
    for (const auto& direction : directions) {
      double t = 1.0;
      for (int attempt = 0; attempt < 40 && !accepted; ++attempt, t *= 0.5) {
        GmmState trial = evaluate(X, membership, coef + t * direction, balance, W);
        if (std::isfinite(trial.objective) && trial.objective < state.objective) {
          const double previous = state.objective;
          coef += t * direction;
          state = std::move(trial);
          accepted = true;
          const double step_size = t * direction.cwiseAbs().maxCoeff();
          const double coef_size = 1.0 + coef.cwiseAbs().maxCoeff();
          if (step_size < options.tolerance * coef_size || previous - state.objective <= 1e-15 * previous)
            return coef;
        }
      }
      if (accepted) break;
    }
    if (!accepted) {
      // No descent along any direction: stationary up to rounding.
      if (gradient.cwiseAbs().maxCoeff() <= 1e-7 * scale * (1.0 + std::sqrt(state.objective))) return coef;
      fail(ErrorKind::NotConverged, "CBPS line search failed to reduce the GMM objective");
    }
  }
  fail(ErrorKind::NotConverged, "CBPS did not converge within the iteration limit");
}

}  // namespace

CbpsFit fit_cbps(const Eigen::MatrixXd& X, std::span<const double> membership,
                 const CbpsOptions& options) {
  const auto n = X.rows();
  const auto m = X.cols();
  if (static_cast<Eigen::Index>(membership.size()) != n)
    fail(ErrorKind::DimensionMismatch, "membership length does not match design rows");
  double n_conv = 0.0;
  for (double c : membership) {
    if (c != 0.0 && c != 1.0) fail(ErrorKind::InvalidArgument, "membership must be 0/1");
    n_conv += c;
  }
  if (n_conv == 0.0 || n_conv == static_cast<double>(n))
    fail(ErrorKind::InvalidArgument, "both classes must be present");

  const auto mle = fit_logistic_irls(X, membership);
  const auto q = options.balance_moments ? 2 * m : m;

  CbpsFit fit;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(q, q);
  Eigen::VectorXd coef =
      minimise(X, membership, mle.coef, options.balance_moments, identity, options, fit.iterations);

  Eigen::MatrixXd W = identity;
  if (options.balance_moments) {
    const Eigen::MatrixXd g = cbps_moments(X, membership, coef, true);
    Eigen::MatrixXd S = g.transpose() * g / static_cast<double>(n);
    S.diagonal().array() += options.ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
      fail(ErrorKind::SingularMatrix, "moment covariance is singular despite the ridge");
    W = llt.solve(identity);
    if (!W.allFinite()) fail(ErrorKind::SingularMatrix, "moment covariance inverse is not finite");
    coef = minimise(X, membership, coef, true, W, options, fit.iterations);
  }

  const Eigen::VectorXd gbar =
      cbps_moments(X, membership, coef, options.balance_moments).colwise().mean().transpose();
  fit.objective = gbar.dot(W * gbar);
  if (options.balance_moments) fit.balance_residuals = gbar.tail(m);
  fit.fitted.resize(n);
  const Eigen::VectorXd eta = X * coef;
  for (Eigen::Index i = 0; i < n; ++i) fit.fitted(i) = expit(eta(i));
  fit.coef = std::move(coef);
  return fit;
}

}  // namespace propweight
