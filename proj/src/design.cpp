#include "propweight/design.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "propweight/error.hpp"

namespace propweight {

std::string_view to_string(Expansion expansion) {
  switch (expansion) {
    case Expansion::main_effects: return "main_effects";
    case Expansion::second_order: return "second_order";
    case Expansion::orthogonal_poly2: return "orthogonal_poly2";
  }
  return "main_effects";
}

Expansion expansion_from_string(std::string_view text) {
  if (text == "main_effects") return Expansion::main_effects;
  if (text == "second_order") return Expansion::second_order;
  if (text == "orthogonal_poly2") return Expansion::orthogonal_poly2;
  fail(ErrorKind::ConfigError, "unknown expansion '" + std::string(text) + "'");
}

namespace {

constexpr double kDedupTolerance = 1e-12;

struct ColumnSource {
  const std::vector<double>* numeric = nullptr;
  const std::vector<int>* codes = nullptr;
};

std::vector<ColumnSource> bind_columns(const DataTable& data, const Schema& variables) {
  std::vector<ColumnSource> sources;
  sources.reserve(variables.size());
  for (const auto& v : variables) {
    const auto c = data.column_index(v.name);
    if (data.spec(c) != v)
      fail(ErrorKind::SchemaMismatch, "variable '" + v.name + "' does not match the design");
    ColumnSource src;
    if (v.is_categorical())
      src.codes = &data.codes(c);
    else
      src.numeric = &data.numeric(c);
    sources.push_back(src);
  }
  return sources;
}

double poly_value(const DesignSpec::PolyBasis& b, int degree, double x) {
  const double q1 = x - b.alpha0;
  if (degree == 1) return q1 / std::sqrt(b.norm1);
  const double q2 = (x - b.alpha1) * q1 - (b.norm1 / b.norm0);
  return q2 / std::sqrt(b.norm2);
}

std::size_t distinct_count(const std::vector<double>& x, std::size_t cap) {
  std::set<double> seen;
  for (double v : x) {
    seen.insert(v);
    if (seen.size() >= cap) break;
  }
  return seen.size();
}

// Scaled to unit max-abs; all-zero columns stay zero.
Eigen::VectorXd unit_max_abs(const Eigen::VectorXd& v) {
  const double m = v.cwiseAbs().maxCoeff();
  return m > 0.0 ? Eigen::VectorXd(v / m) : v;
}

bool is_constant(const Eigen::VectorXd& scaled) {
  if (scaled.size() == 0) return true;
  return (scaled.array() - scaled(0)).abs().maxCoeff() < kDedupTolerance;
}

}  // namespace

DesignSpec DesignSpec::fit(const DataTable& data, std::span<const std::string> variables,
                           Expansion expansion) {
  if (variables.empty()) fail(ErrorKind::InvalidArgument, "empty variable selection");
  if (data.rows() == 0) fail(ErrorKind::InvalidArgument, "empty table");

  DesignSpec spec;
  spec.expansion_ = expansion;
  for (const auto& name : variables) spec.variables_.push_back(data.spec(data.column_index(name)));
  validate_schema(spec.variables_);
  const auto sources = bind_columns(data, spec.variables_);
  spec.poly_.resize(spec.variables_.size());

  bool any_continuous = false;
  for (int v = 0; v < static_cast<int>(spec.variables_.size()); ++v) {
    const auto& var = spec.variables_[v];
    if (var.is_categorical()) {
      for (int level = 0; level < static_cast<int>(var.levels.size()); ++level)
        if (level != var.reference_index()) spec.features_.push_back({v, level, 1});
      continue;
    }
    any_continuous = true;
    if (expansion != Expansion::orthogonal_poly2) {
      spec.features_.push_back({v, -1, 1});
      continue;
    }
    const auto& x = *sources[v].numeric;
    const double n = static_cast<double>(x.size());
    PolyBasis b;
    b.norm0 = n;
    double mean = 0.0;
    for (double xi : x) mean += xi;
    b.alpha0 = mean / n;
    double n1 = 0.0, xq1 = 0.0;
    for (double xi : x) {
      const double q1 = xi - b.alpha0;
      n1 += q1 * q1;
      xq1 += xi * q1 * q1;
    }
    b.norm1 = n1;
    b.alpha1 = n1 > 0.0 ? xq1 / n1 : b.alpha0;
    double n2 = 0.0;
    for (double xi : x) {
      const double q2 = (xi - b.alpha1) * (xi - b.alpha0) - n1 / n;
      n2 += q2 * q2;
    }
    b.norm2 = n2;
    spec.poly_[v] = b;
    const auto distinct = distinct_count(x, 3);
    if (distinct >= 2) spec.features_.push_back({v, -1, 1});
    if (distinct >= 3) spec.features_.push_back({v, -1, 2});
  }
  if (expansion == Expansion::orthogonal_poly2 && !any_continuous)
    fail(ErrorKind::InvalidArgument, "orthogonal_poly2 needs at least one continuous variable");

  auto feature_name = [&](const Feature& f) {
    const auto& var = spec.variables_[f.variable];
    if (var.is_categorical()) return var.name + ":" + var.levels[f.level];
    if (expansion == Expansion::orthogonal_poly2)
      return "poly" + std::to_string(f.degree) + "(" + var.name + ")";
    return var.name;
  };

  std::vector<Term> candidates;
  candidates.push_back(Term{"(Intercept)", {}, {}});
  const int n_features = static_cast<int>(spec.features_.size());
  for (int f = 0; f < n_features; ++f) candidates.push_back(Term{feature_name(spec.features_[f]), {f}, {}});
  if (expansion == Expansion::second_order) {
    // Main-effect term index of feature f is f + 1 before pruning.
    for (int a = 0; a < n_features; ++a) {
      for (int b = a + 1; b < n_features; ++b) {
        const auto& fa = spec.features_[a];
        const auto& fb = spec.features_[b];
        if (fa.variable == fb.variable) continue;  // indicator products of one factor vanish
        candidates.push_back(Term{feature_name(fa) + "*" + feature_name(fb), {a, b}, {a + 1, b + 1}});
      }
    }
    for (int f = 0; f < n_features; ++f) {
      const auto& feat = spec.features_[f];
      if (spec.variables_[feat.variable].is_categorical()) continue;
      candidates.push_back(Term{feature_name(feat) + "^2", {f, f}, {f + 1}});
    }
  }

  // Evaluate candidates on the fitting data and prune constant / duplicate
  // columns. Earlier columns win, so main effects are never dropped in favour
  // of an expansion column.
  spec.terms_ = candidates;
  const Eigen::MatrixXd full = spec.apply(data);
  std::vector<Eigen::VectorXd> kept_scaled;
  std::vector<int> old_to_new(candidates.size(), -1);
  std::vector<Term> kept;
  for (std::size_t t = 0; t < candidates.size(); ++t) {
    const Eigen::VectorXd scaled = unit_max_abs(full.col(static_cast<Eigen::Index>(t)));
    if (t > 0) {
      if (is_constant(scaled)) continue;
      bool duplicate = false;
      for (const auto& other : kept_scaled)
        if ((other - scaled).cwiseAbs().maxCoeff() < kDedupTolerance) {
          duplicate = true;
          break;
        }
      if (duplicate) continue;
    }
    old_to_new[t] = static_cast<int>(kept.size());
    kept.push_back(candidates[t]);
    kept_scaled.push_back(scaled);
  }
  for (auto& term : kept) {
    std::vector<int> parents;
    for (int p : term.parents)
      if (old_to_new[p] >= 0) parents.push_back(old_to_new[p]);
    term.parents = std::move(parents);
  }
  spec.terms_ = std::move(kept);
  if (spec.terms_.size() < 2)
    fail(ErrorKind::RankDeficient, "design expansion has no non-constant columns");
  return spec;
}

Eigen::MatrixXd DesignSpec::apply(const DataTable& data) const {
  const auto sources = bind_columns(data, variables_);
  const auto n = static_cast<Eigen::Index>(data.rows());
  Eigen::MatrixXd features(n, static_cast<Eigen::Index>(features_.size()));
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const auto& feat = features_[f];
    const auto& src = sources[feat.variable];
    auto col = features.col(static_cast<Eigen::Index>(f));
    if (src.codes) {
      for (Eigen::Index i = 0; i < n; ++i) col(i) = (*src.codes)[i] == feat.level ? 1.0 : 0.0;
    } else if (expansion_ == Expansion::orthogonal_poly2) {
      for (Eigen::Index i = 0; i < n; ++i)
        col(i) = poly_value(poly_[feat.variable], feat.degree, (*src.numeric)[i]);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) col(i) = (*src.numeric)[i];
    }
  }
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    auto col = out.col(static_cast<Eigen::Index>(t));
    col.setOnes();
    for (int f : terms_[t].features) col.array() *= features.col(f).array();
  }
  return out;
}

DesignSpec DesignSpec::subset(std::span<const std::size_t> columns) const {
  if (columns.empty() || columns.front() != 0)
    fail(ErrorKind::InvalidArgument, "design subset must start with the intercept column");
  DesignSpec out = *this;
  out.terms_.clear();
  std::vector<int> old_to_new(terms_.size(), -1);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= terms_.size()) fail(ErrorKind::InvalidArgument, "design column out of range");
    old_to_new[columns[k]] = static_cast<int>(k);
  }
  for (auto c : columns) {
    Term term = terms_[c];
    std::vector<int> parents;
    for (int p : term.parents)
      if (old_to_new[p] >= 0) parents.push_back(old_to_new[p]);
    term.parents = std::move(parents);
    out.terms_.push_back(std::move(term));
  }
  return out;
}

std::vector<std::string> DesignSpec::column_names() const {
  std::vector<std::string> names;
  names.reserve(terms_.size());
  for (const auto& t : terms_) names.push_back(t.name);
  return names;
}

std::vector<std::size_t> DesignSpec::columns_for(std::string_view variable) const {
  std::vector<std::size_t> cols;
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    if (!is_main_effect(t)) continue;
    const auto& feat = features_[terms_[t].features.front()];
    if (variables_[feat.variable].name == variable) cols.push_back(t);
  }
  return cols;
}

nlohmann::json DesignSpec::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : features_)
    features.push_back({{"variable", f.variable}, {"level", f.level}, {"degree", f.degree}});
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : terms_)
    terms.push_back({{"name", t.name}, {"features", t.features}, {"parents", t.parents}});
  nlohmann::json poly = nlohmann::json::array();
  for (const auto& p : poly_)
    poly.push_back({{"alpha0", p.alpha0}, {"alpha1", p.alpha1}, {"norm0", p.norm0},
                    {"norm1", p.norm1}, {"norm2", p.norm2}});
  return {{"expansion", to_string(expansion_)},
          {"variables", schema_to_json(variables_)["variables"]},
          {"poly_basis", poly},
          {"features", features},
          {"terms", terms}};
}

DesignSpec DesignSpec::from_json(const nlohmann::json& doc) {
  DesignSpec spec;
  spec.expansion_ = expansion_from_string(doc.at("expansion").get<std::string>());
  spec.variables_ = schema_from_json({{"variables", doc.at("variables")}});
  for (const auto& p : doc.at("poly_basis"))
    spec.poly_.push_back({p.at("alpha0").get<double>(), p.at("alpha1").get<double>(),
                          p.at("norm0").get<double>(), p.at("norm1").get<double>(),
                          p.at("norm2").get<double>()});
  for (const auto& f : doc.at("features"))
    spec.features_.push_back({f.at("variable").get<int>(), f.at("level").get<int>(),
                              f.at("degree").get<int>()});
  for (const auto& t : doc.at("terms"))
    spec.terms_.push_back({t.at("name").get<std::string>(), t.at("features").get<std::vector<int>>(),
                           t.at("parents").get<std::vector<int>>()});
  if (spec.poly_.size() != spec.variables_.size())
    fail(ErrorKind::ConfigError, "design spec poly_basis does not match variables");
  return spec;
}

DesignMatrix build_design_matrix(const DataTable& data, std::span<const std::string> variables,
                                 Expansion expansion) {
  auto spec = DesignSpec::fit(data, variables, expansion);
  auto values = spec.apply(data);
  return DesignMatrix{std::move(values), std::move(spec)};
}

}  // namespace propweight
