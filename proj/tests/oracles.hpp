#pragma once

// Independent reference computations used to check the library. None of
// these share code with src/.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Nelder-Mead minimiser with restarts from the best vertex.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                                   double step = 0.5, int restarts = 12, int max_iter = 20000) {
  const auto n = x0.size();
  for (int rs = 0; rs < restarts; ++rs) {
    std::vector<Eigen::VectorXd> s(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) s[i + 1](i) += step;
    for (Eigen::Index i = 0; i <= n; ++i) fv[i] = f(s[i]);
    for (int it = 0; it < max_iter; ++it) {
      std::vector<Eigen::Index> order(n + 1);
      for (Eigen::Index i = 0; i <= n; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
      std::vector<Eigen::VectorXd> s2;
      std::vector<double> f2;
      for (auto i : order) {
        s2.push_back(s[i]);
        f2.push_back(fv[i]);
      }
      s = s2;
      fv = f2;
      if (std::abs(fv[n] - fv[0]) <= 1e-15 * (std::abs(fv[0]) + 1e-300)) break;
      Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) c += s[i];
      c /= static_cast<double>(n);
      const Eigen::VectorXd xr = c + (c - s[n]);
      const double fr = f(xr);
      if (fr < fv[0]) {
        const Eigen::VectorXd xe = c + 2.0 * (c - s[n]);
        const double fe = f(xe);
        if (fe < fr) {
          s[n] = xe;
          fv[n] = fe;
        } else {
          s[n] = xr;
          fv[n] = fr;
        }
      } else if (fr < fv[n - 1]) {
        s[n] = xr;
        fv[n] = fr;
      } else {
        const bool outside = fr < fv[n];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(c + 0.5 * (xr - c)) : Eigen::VectorXd(c + 0.5 * (s[n] - c));
        const double fc = f(xc);
        if (fc < (outside ? fr : fv[n])) {
          s[n] = xc;
          fv[n] = fc;
        } else {
          for (Eigen::Index i = 1; i <= n; ++i) {
            s[i] = s[0] + 0.5 * (s[i] - s[0]);
            fv[i] = f(s[i]);
          }
        }
      }
    }
    x0 = s[0];
    step *= 0.1;
    if (step < 1e-9) step = 1e-9;
  }
  return x0;
}

inline double weighted_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                              const Eigen::VectorXd& b) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double eta = X.row(i).dot(b);
    const double log1pexp = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += w(i) * (y(i) * eta - log1pexp);
  }
  return ll;
}

// Central-difference Jacobian of F: R^k -> R^m.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = F(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    const double hj = h * std::max(1.0, std::abs(x(j)));
    xp(j) += hj;
    xm(j) -= hj;
    J.col(j) = (F(xp) - F(xm)) / (2.0 * hj);
  }
  return J;
}

// Entropy-balancing primal: min sum w log(w / b) s.t. A w = c (A stacks a row
// of ones over the moment rows), from a feasible positive start, by Newton
// steps restricted to the null space of A with a positivity-preserving
// backtracking line search.
inline Eigen::VectorXd entropy_primal(const Eigen::MatrixXd& F, const Eigen::VectorXd& targets,
                                      const Eigen::VectorXd& base, Eigen::VectorXd w) {
  const auto n = F.rows();
  Eigen::MatrixXd A(F.cols() + 1, n);
  A.row(0).setOnes();
  A.bottomRows(F.cols()) = F.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  const Eigen::MatrixXd N = lu.kernel();
  auto obj = [&](const Eigen::VectorXd& v) { return (v.array() * (v.array() / base.array()).log()).sum(); };
  (void)targets;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd g = (w.array() / base.array()).log() + 1.0;
    const Eigen::MatrixXd H = N.transpose() * w.cwiseInverse().asDiagonal() * N;
    const Eigen::VectorXd gr = N.transpose() * g;
    if (gr.norm() < 1e-14) break;
    const Eigen::VectorXd v = -H.ldlt().solve(gr);
    Eigen::VectorXd d = N * v;
    double t = 1.0;
    while ((w + t * d).minCoeff() <= 0.0) t *= 0.5;
    const double f0 = obj(w);
    while (obj(w + t * d) > f0 + 1e-4 * t * g.dot(d) && t > 1e-20) t *= 0.5;
    w += t * d;
  }
  return w;
}

// Sandwich A^{-1} B A^{-1} assembled element by element.
inline Eigen::MatrixXd naive_sandwich(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& beta) {
  const auto n = Z.rows();
  const auto p = Z.cols();
  std::vector<double> mu(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) eta += Z(i, k) * beta(k);
    mu[i] = 1.0 / (1.0 + std::exp(-eta));
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p), B = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k < p; ++k)
      for (Eigen::Index i = 0; i < n; ++i) {
        A(j, k) += w(i) * mu[i] * (1.0 - mu[i]) * Z(i, j) * Z(i, k);
        const double r = w(i) * (y(i) - mu[i]);
        B(j, k) += r * Z(i, j) * r * Z(i, k);
      }
  // Gauss-Jordan inverse.
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(p, p), a = A;
  for (Eigen::Index c = 0; c < p; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < p; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    inv.row(c).swap(inv.row(piv));
    const double d = a(c, c);
    a.row(c) /= d;
    inv.row(c) /= d;
    for (Eigen::Index r = 0; r < p; ++r) {
      if (r == c) continue;
      const double m = a(r, c);
      a.row(r) -= m * a.row(c);
      inv.row(r) -= m * inv.row(c);
    }
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k < p; ++k)
      for (Eigen::Index a1 = 0; a1 < p; ++a1)
        for (Eigen::Index b1 = 0; b1 < p; ++b1) out(j, k) += inv(j, a1) * B(a1, b1) * inv(b1, k);
  return out;
}

// Random logistic-regression instance with an intercept column.
struct Instance {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

inline Instance random_instance(std::mt19937_64& rng, int n, int p, bool weighted) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance inst;
  inst.X.resize(n, p);
  inst.y.resize(n);
  inst.w = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd beta(p);
  for (int k = 0; k < p; ++k) beta(k) = 0.6 * z(rng);
  for (int i = 0; i < n; ++i) {
    inst.X(i, 0) = 1.0;
    for (int k = 1; k < p; ++k) inst.X(i, k) = z(rng);
    const double pr = 1.0 / (1.0 + std::exp(-inst.X.row(i).dot(beta)));
    inst.y(i) = u(rng) < pr ? 1.0 : 0.0;
    if (weighted) inst.w(i) = 0.2 + 2.0 * u(rng);
  }
  return inst;
}

}  // namespace oracle
