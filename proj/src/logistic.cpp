#include "propweight/logistic.hpp"

#include <algorithm>
#include <cmath>

#include "propweight/error.hpp"

namespace propweight {

namespace {

Eigen::VectorXd as_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// X^T diag(d) X, using only the lower triangle of the product.
Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& X, const Eigen::VectorXd& d) {
  const auto k = X.cols();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(k, k);
  H.selfadjointView<Eigen::Lower>().rankUpdate((X.array().colwise() * d.array().sqrt()).matrix().transpose());
  return H.selfadjointView<Eigen::Lower>();
}

bool numerically_singular(const Eigen::MatrixXd& H) {
  const auto k = H.rows();
  Eigen::VectorXd scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(H(j, j) > 0.0)) return true;
    scale(j) = 1.0 / std::sqrt(H(j, j));
  }
  const Eigen::MatrixXd S = scale.asDiagonal() * H * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return ev.minCoeff() <= 1e-12 * ev.maxCoeff();
}

}  // namespace

double logistic_log_likelihood(const Eigen::MatrixXd& X, std::span<const double> y,
                               std::span<const double> w, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eta = X * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    ll += wi * (y[static_cast<std::size_t>(i)] * eta(i) - softplus(eta(i)));
  }
  return ll;
}

LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, std::span<const double> y,
                              std::span<const double> w, const IrlsOptions& options,
                              const Eigen::VectorXd* start) {
  const auto n = X.rows();
  const auto k = X.cols();
  if (static_cast<Eigen::Index>(y.size()) != n)
    fail(ErrorKind::DimensionMismatch, "response length does not match design rows");
  if (!w.empty() && static_cast<Eigen::Index>(w.size()) != n)
    fail(ErrorKind::DimensionMismatch, "weight length does not match design rows");
  if (n == 0 || k == 0) fail(ErrorKind::InvalidArgument, "empty design");
  for (double v : y)
    if (v < 0.0 || v > 1.0) fail(ErrorKind::InvalidArgument, "logistic response must lie in [0, 1]");

  const Eigen::VectorXd yv = as_vector(y);
  const Eigen::VectorXd wv = w.empty() ? Eigen::VectorXd::Ones(n) : as_vector(w);
  if ((wv.array() < 0.0).any() || !wv.allFinite())
    fail(ErrorKind::InvalidArgument, "weights must be non-negative and finite");

  if (options.check_rank && numerically_singular(weighted_gram(X, wv)))
    fail(ErrorKind::RankDeficient, "design matrix is not of full column rank");

  LogisticFit fit;
  fit.coef = start ? *start : Eigen::VectorXd::Zero(k);
  if (fit.coef.size() != k) fail(ErrorKind::DimensionMismatch, "start vector has wrong length");

  auto deviance_at = [&](const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += wv(i) * (yv(i) * eta(i) - softplus(eta(i)));
    return -2.0 * ll;
  };

  Eigen::VectorXd eta = X * fit.coef;
  double dev = deviance_at(eta);
  fit.deviance_trace.push_back(dev);
  Eigen::VectorXd mu(n);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = expit(eta(i));
    const Eigen::VectorXd score = X.transpose() * (wv.array() * (yv - mu).array()).matrix();
    if (score.cwiseAbs().maxCoeff() < options.score_tolerance) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd d = wv.array() * mu.array() * (1.0 - mu.array());
    const Eigen::MatrixXd H = weighted_gram(X, d);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) break;
    Eigen::VectorXd step = ldlt.solve(score);
    if (!step.allFinite()) break;

    Eigen::VectorXd next = fit.coef + step;
    Eigen::VectorXd next_eta = X * next;
    double next_dev = deviance_at(next_eta);
    for (int half = 0; half < 40 && !(next_dev <= dev * (1.0 + 1e-15) + 1e-300); ++half) {
      step *= 0.5;
      next = fit.coef + step;
      next_eta = X * next;
      next_dev = deviance_at(next_eta);
    }
    fit.iterations = iter;
    const double rel_change = std::abs(dev - next_dev) / (std::abs(next_dev) + 0.1);
    fit.coef = std::move(next);
    eta = std::move(next_eta);
    dev = next_dev;
    fit.deviance_trace.push_back(dev);
    if (rel_change < options.relative_deviance_tolerance) {
      fit.converged = true;
      break;
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) mu(i) = expit(eta(i));
  double max_eta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (wv(i) > 0.0) max_eta = std::max(max_eta, std::abs(eta(i)));
  if (max_eta > options.separation_threshold)
    fail(ErrorKind::Separation, "fitted probabilities saturate (|linear predictor| = " +
                                    std::to_string(max_eta) + "); likely separation");
  if (!fit.converged) fail(ErrorKind::NotConverged, "IRLS did not converge");

  fit.fitted = std::move(mu);
  fit.deviance = dev;
  fit.log_likelihood = -0.5 * dev;
  return fit;
}

double aic(int parameters, double log_likelihood) {
  return 2.0 * parameters - 2.0 * log_likelihood;
}

}  // namespace propweight
