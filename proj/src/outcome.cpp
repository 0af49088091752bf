#include "propweight/outcome.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "propweight/error.hpp"

namespace propweight {

std::string_view to_string(VarianceKind kind) {
  switch (kind) {
    case VarianceKind::model: return "model";
    case VarianceKind::design: return "design";
    case VarianceKind::proposed: return "proposed";
    case VarianceKind::bootstrap: return "bootstrap";
  }
  return "design";
}

Eigen::VectorXd VarianceEstimate::standard_errors() const {
  return matrix.diagonal().cwiseMax(0.0).cwiseSqrt();
}

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) fail(ErrorKind::SingularMatrix, std::string(what) + " is singular");
  Eigen::MatrixXd inv = lu.inverse();
  if (!inv.allFinite()) fail(ErrorKind::SingularMatrix, std::string(what) + " inverse is not finite");
  return inv;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& Z, const Eigen::VectorXd& d) {
  return Z.transpose() * (Z.array().colwise() * d.array()).matrix();
}

void check_fit(const WeightedFit& fit, const Eigen::MatrixXd& Z) {
  if (!fit.converged) fail(ErrorKind::NotConverged, "outcome fit did not converge");
  if (Z.rows() != fit.response.size() || Z.cols() != fit.beta.size())
    fail(ErrorKind::DimensionMismatch, "design does not match the outcome fit");
}

}  // namespace

WeightedFit fit_weighted_glm(const Eigen::MatrixXd& Z, std::span<const double> y,
                             std::span<const double> w, const IrlsOptions& options) {
  if (static_cast<Eigen::Index>(w.size()) != Z.rows())
    fail(ErrorKind::DimensionMismatch, "one weight per outcome row required");
  for (double v : y)
    if (v != 0.0 && v != 1.0) fail(ErrorKind::InvalidArgument, "outcome must be binary 0/1");
  Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  if ((wv.array() <= 0.0).any() || !wv.allFinite())
    fail(ErrorKind::InvalidArgument, "outcome weights must be positive and finite");
  // Mean-one scaling keeps the score tolerance meaningful for any weight scale.
  const Eigen::VectorXd scaled = wv * (static_cast<double>(wv.size()) / wv.sum());
  const auto lf = fit_logistic_irls(Z, y, {scaled.data(), static_cast<std::size_t>(scaled.size())}, options);

  WeightedFit fit;
  fit.beta = lf.coef;
  fit.weights = std::move(wv);
  fit.fitted_mu = lf.fitted;
  fit.response = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  fit.converged = lf.converged;
  fit.iterations = lf.iterations;
  fit.deviance_trace = lf.deviance_trace;
  return fit;
}

VarianceEstimate model_variance(const WeightedFit& fit, const Eigen::MatrixXd& Z) {
  check_fit(fit, Z);
  const Eigen::VectorXd w = fit.weights * (static_cast<double>(fit.weights.size()) / fit.weights.sum());
  const Eigen::VectorXd d = w.array() * fit.fitted_mu.array() * (1.0 - fit.fitted_mu.array());
  VarianceEstimate v;
  v.kind = VarianceKind::model;
  v.matrix = symmetrize(checked_inverse(gram(Z, d), "weighted information"));
  return v;
}

VarianceEstimate design_variance(const WeightedFit& fit, const Eigen::MatrixXd& Z) {
  check_fit(fit, Z);
  const auto& w = fit.weights;
  const auto& mu = fit.fitted_mu;
  const Eigen::VectorXd d = w.array() * mu.array() * (1.0 - mu.array());
  const Eigen::MatrixXd a_inv = checked_inverse(gram(Z, d), "A");
  const Eigen::VectorXd r = w.array() * (fit.response - mu).array();
  const Eigen::MatrixXd U = Z.array().colwise() * r.array();
  const Eigen::MatrixXd B = U.transpose() * U;
  VarianceEstimate v;
  v.kind = VarianceKind::design;
  v.matrix = symmetrize(a_inv * B * a_inv);
  return v;
}

StackedComponents stacked_components(const WeightedFit& fit, const Eigen::MatrixXd& Z,
                                     const Eigen::MatrixXd& X, std::span<const double> membership,
                                     const Eigen::VectorXd& gamma, CrossTermForm form) {
  check_fit(fit, Z);
  if (static_cast<Eigen::Index>(membership.size()) != X.rows() || gamma.size() != X.cols())
    fail(ErrorKind::DimensionMismatch, "weight-model design does not match membership/gamma");

  const Eigen::VectorXd eta = X * gamma;
  const auto n = X.rows();
  const auto m = X.cols();
  const auto p = Z.cols();

  StackedComponents out;
  Eigen::VectorXd info_d(n);
  std::vector<Eigen::Index> conv;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double P = expit(eta(i));
    info_d(i) = P * (1.0 - P);
    if (membership[static_cast<std::size_t>(i)] == 1.0) conv.push_back(i);
  }
  if (static_cast<Eigen::Index>(conv.size()) != Z.rows())
    fail(ErrorKind::DimensionMismatch, "outcome rows must be the convenience rows of the combined design");
  out.info_tt = gram(X, info_d);

  const Eigen::VectorXd mu = [&] {
    Eigen::VectorXd v = Z * fit.beta;
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = expit(v(i));
    return v;
  }();

  out.info_uu = Eigen::MatrixXd::Zero(p, p);
  out.info_ut = Eigen::MatrixXd::Zero(p, m);
  out.cross = Eigen::MatrixXd::Zero(p, m);
  out.score_outer = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd sum_u = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd sum_t = Eigen::VectorXd::Zero(m);
  for (std::size_t k = 0; k < conv.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const Eigen::Index i = conv[k];
    const double w = std::exp(-eta(i));
    const double P = expit(eta(i));
    const Eigen::VectorXd z = Z.row(row).transpose();
    const Eigen::VectorXd x = X.row(i).transpose();
    const Eigen::VectorXd u = (fit.response(row) - mu(row)) * z;  // U_i
    const Eigen::VectorXd ubar = w * u;
    const Eigen::VectorXd t = (1.0 - P) * x;  // T_i with C_i = 1
    out.info_uu.noalias() += (w * mu(row) * (1.0 - mu(row))) * z * z.transpose();
    out.info_ut.noalias() += ubar * x.transpose();
    out.score_outer.noalias() += ubar * ubar.transpose();
    if (form == CrossTermForm::per_unit) out.cross.noalias() += ubar * t.transpose();
    sum_u += ubar;
    sum_t += t;
  }
  if (form == CrossTermForm::product_of_sums) out.cross = sum_u * sum_t.transpose();
  return out;
}

VarianceEstimate proposed_variance(const StackedComponents& c) {
  const Eigen::MatrixXd a_inv = checked_inverse(c.info_uu, "A");
  const Eigen::MatrixXd tt_inv = checked_inverse(c.info_tt, "I_TT");
  const Eigen::MatrixXd design = symmetrize(a_inv * c.score_outer * a_inv);
  VarianceEstimate v;
  v.kind = VarianceKind::proposed;
  v.correction = a_inv * c.info_ut * tt_inv * c.cross.transpose() * a_inv;
  v.matrix = symmetrize(design - v.correction);
  for (Eigen::Index k = 0; k < v.matrix.rows(); ++k) {
    if (v.matrix(k, k) >= 0.0) continue;
    v.not_psd.push_back(static_cast<std::size_t>(k));
  }
  for (auto k : v.not_psd) {
    const auto kk = static_cast<Eigen::Index>(k);
    v.matrix.row(kk) = design.row(kk);
    v.matrix.col(kk) = design.col(kk);
    v.warnings.push_back("NotPSD: coefficient " + std::to_string(k) + " uses the design variance");
  }
  return v;
}

PooledEstimate pool_rubin(std::span<const Eigen::VectorXd> betas,
                          std::span<const Eigen::MatrixXd> variances) {
  const auto M = betas.size();
  if (M < 2) fail(ErrorKind::InvalidArgument, "pooling needs at least two fits");
  if (variances.size() != M) fail(ErrorKind::DimensionMismatch, "one variance per fit required");
  const auto p = betas.front().size();
  for (std::size_t k = 0; k < M; ++k)
    if (betas[k].size() != p || variances[k].rows() != p || variances[k].cols() != p)
      fail(ErrorKind::DimensionMismatch, "fits have different numbers of coefficients");

  PooledEstimate out;
  out.imputations = static_cast<int>(M);
  const double m = static_cast<double>(M);
  out.beta_bar = Eigen::VectorXd::Zero(p);
  out.within = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t k = 0; k < M; ++k) {
    out.beta_bar += betas[k];
    out.within += variances[k];
  }
  out.beta_bar /= m;
  out.within /= m;
  out.between = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t k = 0; k < M; ++k) {
    const Eigen::VectorXd d = betas[k] - out.beta_bar;
    out.between += d * d.transpose();
  }
  out.between /= (m - 1.0);
  const double inflate = 1.0 + 1.0 / m;
  out.total = out.within + inflate * out.between;
  out.df.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double b = inflate * out.between(j, j);
    out.df(j) = b > 0.0 ? (m - 1.0) * std::pow(1.0 + out.within(j, j) / b, 2)
                        : std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<OddsRatioRow> report_odds_ratios(const Eigen::VectorXd& beta,
                                             const Eigen::MatrixXd& variance,
                                             std::span<const std::string> names, double level,
                                             const Eigen::VectorXd& df, bool include_intercept) {
  const auto p = beta.size();
  if (variance.rows() != p || variance.cols() != p || static_cast<Eigen::Index>(names.size()) != p)
    fail(ErrorKind::DimensionMismatch, "coefficients, variance and names disagree");
  if (df.size() != 0 && df.size() != p) fail(ErrorKind::DimensionMismatch, "one df per coefficient");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::InvalidArgument, "confidence level must be in (0, 1)");
  const double upper = 1.0 - (1.0 - level) / 2.0;
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), upper);

  std::vector<OddsRatioRow> rows;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!include_intercept && names[static_cast<std::size_t>(k)] == "(Intercept)") continue;
    if (variance(k, k) < 0.0) fail(ErrorKind::InvalidArgument, "negative variance on the diagonal");
    double q = z;
    if (df.size() != 0 && std::isfinite(df(k)))
      q = boost::math::quantile(boost::math::students_t_distribution<double>(df(k)), upper);
    const double se = std::sqrt(variance(k, k));
    rows.push_back({names[static_cast<std::size_t>(k)], beta(k), se, std::exp(beta(k)),
                    std::exp(beta(k) - q * se), std::exp(beta(k) + q * se)});
  }
  return rows;
}

}  // namespace propweight
