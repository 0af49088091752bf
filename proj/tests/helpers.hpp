#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "propweight/data.hpp"
#include "propweight/error.hpp"
#include "propweight/logistic.hpp"
#include "propweight/outcome.hpp"

namespace testing {

inline propweight::DataTable table_from_csv(const std::string& text, const propweight::Schema& schema,
                                            propweight::CsvOptions options = {}) {
  std::istringstream in(text);
  return propweight::read_csv(in, schema, options).table;
}

inline propweight::DataTable numeric_table(const std::string& name, std::vector<double> values) {
  propweight::DataTable::Column c;
  c.numeric = std::move(values);
  return propweight::DataTable({propweight::VariableSpec::continuous(name)}, {c});
}

// Two continuous covariates and one three-level factor; the shift moves the
// second sample's distribution.
inline propweight::DataTable mixed_table(std::mt19937_64& rng, std::size_t n, double shift) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  propweight::Schema schema{propweight::VariableSpec::continuous("x1"), propweight::VariableSpec::continuous("x2"),
                            propweight::VariableSpec::categorical("g", {"a", "b", "c"}, "a")};
  std::vector<propweight::DataTable::Column> cols(3);
  for (std::size_t i = 0; i < n; ++i) {
    cols[0].numeric.push_back(z(rng) + shift);
    cols[1].numeric.push_back(z(rng) * (1.0 + 0.3 * shift));
    const double v = u(rng) + 0.2 * shift;
    cols[2].codes.push_back(v < 0.4 ? 0 : v < 0.75 ? 1 : 2);
  }
  return propweight::DataTable(schema, cols);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("propweight_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// A logistic membership model on 3 columns and a weighted logistic outcome
// model on the convenience rows, weighted by exp(-x'gamma).
struct StackedInstance {
  Eigen::MatrixXd X;
  std::vector<double> C;
  Eigen::VectorXd gamma;
  Eigen::MatrixXd Z;
  Eigen::VectorXd y;
  propweight::WeightedFit fit;
};

inline StackedInstance stacked_instance(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    StackedInstance s;
    s.X.resize(n, 3);
    s.C.resize(n);
    for (int i = 0; i < n; ++i) {
      s.X.row(i) << 1.0, z(rng), z(rng);
      s.C[i] = u(rng) < propweight::expit(0.2 + 0.7 * s.X(i, 1)) ? 1.0 : 0.0;
    }
    try {
      s.gamma = propweight::fit_logistic_irls(s.X, s.C).coef;
      std::vector<Eigen::Index> rows;
      for (int i = 0; i < n; ++i)
        if (s.C[i] == 1.0) rows.push_back(i);
      s.Z.resize(static_cast<Eigen::Index>(rows.size()), 2);
      s.y.resize(static_cast<Eigen::Index>(rows.size()));
      std::vector<double> w;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        s.Z.row(r) << 1.0, s.X(rows[k], 1) + 0.5 * z(rng);
        s.y(r) = u(rng) < propweight::expit(-0.3 + 0.8 * s.Z(r, 1)) ? 1.0 : 0.0;
        w.push_back(std::exp(-s.X.row(rows[k]).dot(s.gamma)));
      }
      s.fit = propweight::fit_weighted_glm(s.Z, to_vector(s.y), w);
      return s;
    } catch (const propweight::Error&) {
    }
  }
}

// Sum over rows of the stacked (membership score, weighted outcome score).
inline Eigen::VectorXd stacked_estimating_function(const StackedInstance& s, const Eigen::VectorXd& theta) {
  const auto m = s.X.cols();
  const auto p = s.Z.cols();
  const Eigen::VectorXd g = theta.head(m);
  const Eigen::VectorXd b = theta.tail(p);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m + p);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < s.X.rows(); ++i) {
    const double eta = s.X.row(i).dot(g);
    const double c = s.C[static_cast<std::size_t>(i)];
    out.head(m) += (c - propweight::expit(eta)) * s.X.row(i).transpose();
    if (c == 1.0) {
      const double mu = propweight::expit(s.Z.row(k).dot(b));
      out.tail(p) += std::exp(-eta) * (s.y(k) - mu) * s.Z.row(k).transpose();
      ++k;
    }
  }
  return out;
}

}  // namespace testing
