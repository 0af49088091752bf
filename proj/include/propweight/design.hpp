#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "propweight/data.hpp"

namespace propweight {

enum class Expansion { main_effects, second_order, orthogonal_poly2 };

std::string_view to_string(Expansion expansion);
Expansion expansion_from_string(std::string_view text);

// A fitted recipe for turning table rows into design-matrix rows. Fitting
// fixes everything that depends on the data (orthogonal-polynomial
// recurrence coefficients, which expansion columns survive deduplication);
// apply() then reproduces the same columns on any table with the same
// variables.
class DesignSpec {
 public:
  struct Feature {
    int variable = -1;  // index into variables()
    int level = -1;     // categorical indicator level, -1 for continuous
    int degree = 1;     // 1 or 2; 2 only for orthogonal_poly2
  };

  struct Term {
    std::string name;
    std::vector<int> features;  // empty: intercept; one: main effect; two: product or square
    std::vector<int> parents;   // main-effect column indices the term requires
  };

  // Three-term recurrence coefficients of the degree-2 orthogonal basis.
  struct PolyBasis {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    double norm0 = 1.0;
    double norm1 = 1.0;
    double norm2 = 1.0;
  };

  static DesignSpec fit(const DataTable& data, std::span<const std::string> variables,
                        Expansion expansion);

  Eigen::MatrixXd apply(const DataTable& data) const;

  // Keep only the given columns (in the given order). Column 0 must be kept
  // first so the intercept stays in place.
  DesignSpec subset(std::span<const std::size_t> columns) const;

  std::size_t columns() const { return terms_.size(); }
  Expansion expansion() const { return expansion_; }
  const Schema& variables() const { return variables_; }
  const std::vector<Term>& terms() const { return terms_; }
  std::vector<std::string> column_names() const;
  bool is_main_effect(std::size_t column) const { return terms_[column].features.size() == 1 && terms_[column].parents.empty(); }

  // Main-effect columns encoding the named variable.
  std::vector<std::size_t> columns_for(std::string_view variable) const;

  nlohmann::json to_json() const;
  static DesignSpec from_json(const nlohmann::json& doc);

 private:
  Schema variables_;
  Expansion expansion_ = Expansion::main_effects;
  std::vector<PolyBasis> poly_;  // per variable; unused for categorical
  std::vector<Feature> features_;
  std::vector<Term> terms_;
};

struct DesignMatrix {
  Eigen::MatrixXd values;
  DesignSpec spec;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  std::vector<std::string> column_names() const { return spec.column_names(); }
};

DesignMatrix build_design_matrix(const DataTable& data, std::span<const std::string> variables,
                                 Expansion expansion);

}  // namespace propweight
