#include "propweight/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "propweight/logistic.hpp"
#include "propweight/outcome.hpp"
#include "propweight/pipeline.hpp"

namespace propweight {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const std::string kResponse = "y";

enum Education { less_than_hs, high_school, some_college, college_grad };
enum Race { nh_white, hispanic, nh_asian, nh_black };

int draw_category(Rng& rng, std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

DataTable with_response(const DataTable& table, const std::vector<double>& y) {
  Schema schema = table.schema();
  std::vector<DataTable::Column> columns;
  for (std::size_t c = 0; c < table.cols(); ++c) {
    DataTable::Column col;
    if (table.spec(c).is_categorical())
      col.codes = table.codes(c);
    else
      col.numeric = table.numeric(c);
    columns.push_back(std::move(col));
  }
  schema.push_back(VariableSpec::continuous(kResponse));
  DataTable::Column ycol;
  ycol.numeric = y;
  columns.push_back(std::move(ycol));
  return DataTable(std::move(schema), std::move(columns));
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const std::size_t> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(idx[k]));
  return out;
}

struct MethodDraw {
  std::optional<Eigen::VectorXd> beta;
  Eigen::VectorXd analytic_se;
  Eigen::VectorXd design_se;
  Eigen::VectorXd bootstrap_se;  // empty without bootstrap
  std::size_t bootstrap_failed = 0;
  std::optional<SimulationFailure> failure;
};

struct SimDraw {
  std::vector<MethodDraw> methods;  // srs, unweighted, true, then config.methods
};

struct Accumulated {
  std::vector<std::pair<int, Eigen::VectorXd>> betas;
  std::vector<Eigen::VectorXd> analytic, design, bootstrap;
  std::size_t failed = 0, bootstrap_failed = 0;
};

Eigen::VectorXd column_mean(const std::vector<Eigen::VectorXd>& xs, Eigen::Index p) {
  Eigen::VectorXd m = Eigen::VectorXd::Constant(p, kNaN);
  if (xs.empty()) return m;
  m.setZero();
  for (const auto& x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

Eigen::VectorXd column_variance(const std::vector<std::pair<int, Eigen::VectorXd>>& xs, Eigen::Index p) {
  if (xs.size() < 2) return Eigen::VectorXd::Constant(p, kNaN);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& [_, x] : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(p);
  for (const auto& [_, x] : xs) var += (x - mean).cwiseAbs2();
  return var / static_cast<double>(xs.size() - 1);
}

}  // namespace

Schema simulation_schema() {
  return {
      VariableSpec::continuous("age"),
      VariableSpec::categorical("sex", {"male", "female"}, "male"),
      VariableSpec::categorical("education", {"<HS", "HS", "some_college", "college_grad"}, "college_grad"),
      VariableSpec::categorical("race_ethnicity", {"NH_White", "Hispanic", "NH_Asian", "NH_Black"}, "NH_White"),
      VariableSpec::categorical("exercise", {"no", "yes"}, "no"),
  };
}

FinitePopulation synthetic_population(std::size_t N, std::uint64_t seed) {
  if (N < 1000) fail(ErrorKind::InvalidArgument, "population size must be at least 1000");
  static constexpr double education_p[] = {0.15, 0.25, 0.30, 0.30};
  static constexpr double race_p[] = {0.62, 0.17, 0.06, 0.15};
  static constexpr double exercise_p[] = {0.40, 0.45, 0.50, 0.55};
  std::vector<DataTable::Column> cols(5);
  cols[0].numeric.resize(N);
  for (std::size_t c = 1; c < 5; ++c) cols[c].codes.resize(N);
  Rng rng = make_stream(seed, 0);
  for (std::size_t i = 0; i < N; ++i) {
    cols[0].numeric[i] = std::round(20.0 + 60.0 * uniform01(rng));
    cols[1].codes[i] = bernoulli(rng, 0.5) ? 1 : 0;
    const int edu = draw_category(rng, education_p);
    cols[2].codes[i] = edu;
    cols[3].codes[i] = draw_category(rng, race_p);
    cols[4].codes[i] = bernoulli(rng, exercise_p[edu]) ? 1 : 0;
  }
  return {DataTable(simulation_schema(), std::move(cols))};
}

void validate_population(const DataTable& table) {
  for (const auto& spec : simulation_schema()) {
    if (!table.has_column(spec.name))
      fail(ErrorKind::InvalidArgument, "population lacks column '" + spec.name + "'");
    const auto& have = table.spec(table.column_index(spec.name));
    if (have.kind != spec.kind || have.levels != spec.levels)
      fail(ErrorKind::InvalidArgument, "population column '" + spec.name + "' does not match the simulation schema");
  }
  const auto& race = table.codes("race_ethnicity");
  for (int level = 0; level < 4; ++level)
    if (std::find(race.begin(), race.end(), level) == race.end())
      fail(ErrorKind::InvalidArgument, "population lacks a race/ethnicity level");
}

Eigen::VectorXd biased_sampling_probability(const DataTable& rows, const BiasedSamplingModel& m) {
  const auto& age = rows.numeric("age");
  const auto& sex = rows.codes("sex");
  const auto& edu = rows.codes("education");
  const auto& race = rows.codes("race_ethnicity");
  const auto& ex = rows.codes("exercise");
  Eigen::VectorXd P(static_cast<Eigen::Index>(rows.rows()));
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double psi = m.intercept + m.age_squared * age[i] * age[i];
    if (sex[i] == 1) psi += m.female;
    if (edu[i] == high_school) psi += m.high_school;
    if (edu[i] == less_than_hs) psi += m.less_than_high_school;
    if (edu[i] == some_college) psi += m.some_college;
    if (race[i] == hispanic) psi += m.hispanic;
    if (race[i] == nh_asian) psi += m.nh_asian + (edu[i] == some_college ? m.nh_asian_some_college : 0.0);
    if (race[i] == nh_black) psi += m.nh_black + (ex[i] == 1 ? m.nh_black_exercise : 0.0);
    P(static_cast<Eigen::Index>(i)) = expit(psi);
  }
  return P;
}

Eigen::VectorXd outcome_probability(const DataTable& rows, const Eigen::VectorXd& P,
                                    const OutcomeGenModel& m) {
  if (P.size() != static_cast<Eigen::Index>(rows.rows()))
    fail(ErrorKind::DimensionMismatch, "one sampling probability per row required");
  const auto& race = rows.codes("race_ethnicity");
  Eigen::VectorXd pi(P.size());
  for (Eigen::Index i = 0; i < P.size(); ++i) {
    const double p = P(i);
    double rho = m.intercept + m.p * p;
    switch (race[static_cast<std::size_t>(i)]) {
      case hispanic: rho += m.hispanic + m.hispanic_p * p; break;
      case nh_asian: rho += m.nh_asian + m.nh_asian_p * p; break;
      case nh_black: rho += m.nh_black + m.nh_black_p * p; break;
      default: break;
    }
    pi(i) = expit(rho);
  }
  return pi;
}

std::vector<double> generate_outcome(const DataTable& rows, const Eigen::VectorXd& P, Rng& rng,
                                     const OutcomeGenModel& model) {
  const Eigen::VectorXd pi = outcome_probability(rows, P, model);
  std::vector<double> y(static_cast<std::size_t>(pi.size()));
  for (Eigen::Index i = 0; i < pi.size(); ++i) y[static_cast<std::size_t>(i)] = bernoulli(rng, pi(i)) ? 1.0 : 0.0;
  return y;
}

std::vector<std::size_t> draw_srs(std::size_t N, std::size_t n, Rng& rng) {
  if (n > N) fail(ErrorKind::InvalidArgument, "sample size exceeds population size");
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) std::swap(idx[k], idx[k + uniform_index(rng, N - k)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> draw_biased(const Eigen::VectorXd& P, std::size_t n, Rng& rng) {
  const auto N = static_cast<std::size_t>(P.size());
  if (n > N) fail(ErrorKind::InvalidArgument, "sample size exceeds population size");
  if ((P.array() <= 0.0).any() || !P.allFinite())
    fail(ErrorKind::InvalidArgument, "selection probabilities must be positive");
  std::vector<double> key(N);
  for (std::size_t i = 0; i < N; ++i) key[i] = std::log(uniform_open0(rng)) / P(static_cast<Eigen::Index>(i));
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto larger = [&](std::size_t a, std::size_t b) { return key[a] > key[b] || (key[a] == key[b] && a < b); };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), larger);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PropensityWeights true_weights(const Eigen::VectorXd& P, TrueWeightForm form, Normalization normalization) {
  if (!((P.array() > 0.0).all() && (P.array() < 1.0).all()))
    fail(ErrorKind::InvalidArgument, "true weights need probabilities strictly inside (0, 1)");
  Eigen::VectorXd raw = P.cwiseInverse();
  if (form == TrueWeightForm::odds) raw.array() -= 1.0;
  return normalize_weights(std::move(raw), normalization);
}

Eigen::VectorXd percent_bias(const Eigen::VectorXd& mean_biased, const Eigen::VectorXd& mean_srs) {
  if (mean_biased.size() != mean_srs.size()) fail(ErrorKind::DimensionMismatch, "coefficient counts differ");
  Eigen::VectorXd out(mean_srs.size());
  for (Eigen::Index k = 0; k < out.size(); ++k)
    out(k) = std::abs(mean_srs(k)) > 1e-8 ? 100.0 * (mean_biased(k) - mean_srs(k)) / std::abs(mean_srs(k)) : kNaN;
  return out;
}

Eigen::VectorXd design_effect(const Eigen::VectorXd& var_weighted, const Eigen::VectorXd& var_srs) {
  if (var_weighted.size() != var_srs.size()) fail(ErrorKind::DimensionMismatch, "coefficient counts differ");
  if ((var_srs.array() <= 0.0).any()) fail(ErrorKind::InvalidArgument, "design effect with zero SRS variance");
  return var_weighted.cwiseQuotient(var_srs);
}

std::vector<BalanceEntry> standardized_difference(const DataTable& convenience,
                                                  const DataTable& representative,
                                                  std::span<const std::string> covariates,
                                                  const Eigen::VectorXd* weights) {
  if (weights && weights->size() != static_cast<Eigen::Index>(convenience.rows()))
    fail(ErrorKind::DimensionMismatch, "one weight per convenience row required");
  const std::size_t nc = convenience.rows();
  const std::size_t nr = representative.rows();
  if (nc == 0 || nr < 2) fail(ErrorKind::InvalidArgument, "standardized differences need data in both samples");
  const double wsum = weights ? weights->sum() : static_cast<double>(nc);

  auto entry = [&](const std::string& name, const std::string& level, auto conv_value, auto rep_value) {
    double cm = 0.0;
    for (std::size_t i = 0; i < nc; ++i)
      cm += (weights ? (*weights)(static_cast<Eigen::Index>(i)) : 1.0) * conv_value(i);
    cm /= wsum;
    double rm = 0.0;
    for (std::size_t i = 0; i < nr; ++i) rm += rep_value(i);
    rm /= static_cast<double>(nr);
    double ss = 0.0;
    for (std::size_t i = 0; i < nr; ++i) ss += (rep_value(i) - rm) * (rep_value(i) - rm);
    const double sd = std::sqrt(ss / static_cast<double>(nr - 1));
    BalanceEntry e{name, level, kNaN, false};
    if (sd > 0.0) {
      e.difference = (cm - rm) / sd;
      e.defined = true;
    }
    return e;
  };

  std::vector<BalanceEntry> out;
  for (const auto& name : covariates) {
    const auto cc = convenience.column_index(name);
    const auto rc = representative.column_index(name);
    const auto& spec = convenience.spec(cc);
    if (!spec.is_categorical()) {
      const auto& cv = convenience.numeric(cc);
      const auto& rv = representative.numeric(rc);
      out.push_back(entry(name, "", [&](std::size_t i) { return cv[i]; }, [&](std::size_t i) { return rv[i]; }));
      continue;
    }
    const auto& cv = convenience.codes(cc);
    const auto& rv = representative.codes(rc);
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      const int code = static_cast<int>(l);
      out.push_back(entry(name, spec.levels[l], [&](std::size_t i) { return cv[i] == code ? 1.0 : 0.0; },
                          [&](std::size_t i) { return rv[i] == code ? 1.0 : 0.0; }));
    }
  }
  return out;
}

const SimulationRow* SimulationReport::find(std::string_view method, std::string_view coefficient) const {
  for (const auto* list : {&rows, &reference})
    for (const auto& r : *list)
      if (r.method == method && r.coefficient == coefficient) return &r;
  return nullptr;
}

SimulationReport run_simulation(const SimulationConfig& config, const FinitePopulation& population,
                                Execution policy) {
  if (config.n_sims <= 0) fail(ErrorKind::InvalidArgument, "n_sims must be positive");
  if (config.sample_size == 0) fail(ErrorKind::InvalidArgument, "sample size must be positive");
  if (config.bootstrap_replicates < 0) fail(ErrorKind::InvalidArgument, "bootstrap replicates must be non-negative");
  validate_population(population.data);
  const std::size_t N = population.size();
  if (config.sample_size > N || config.reference_size > N)
    fail(ErrorKind::InvalidArgument, "sample size exceeds population size");

  const Eigen::VectorXd P = biased_sampling_probability(population.data, config.sampling);
  const auto n_sims = static_cast<std::size_t>(config.n_sims);
  const std::size_t boot_sims = config.bootstrap_replicates < 2 ? 0
                                : config.bootstrap_sims < 0   ? n_sims
                                                              : std::min<std::size_t>(n_sims, static_cast<std::size_t>(config.bootstrap_sims));

  std::vector<std::string> labels{"srs", "unweighted", "true"};
  for (auto m : config.methods) labels.emplace_back(to_string(m));
  const std::size_t n_labels = labels.size();

  const Execution inner = policy == Execution::parallel ? Execution::serial : policy;
  std::vector<SimDraw> draws(n_sims);
  std::vector<BalanceRow> balance;

  for_each_index(n_sims, policy, [&](std::size_t r) {
    const int sim = static_cast<int>(r);
    SimDraw& draw = draws[r];
    draw.methods.resize(n_labels);
    Rng srs_rng = make_stream(config.seed, r, 0);
    Rng biased_rng = make_stream(config.seed, r, 1);
    Rng ref_rng = make_stream(config.seed, r, 2);
    Rng y_rng = make_stream(config.seed, r, 3);

    const auto srs_idx = draw_srs(N, config.sample_size, srs_rng);
    const auto biased_idx = draw_biased(P, config.sample_size, biased_rng);
    const auto srs_P = gather(P, srs_idx);
    const auto biased_P = gather(P, biased_idx);
    const DataTable srs_x = population.data.select_rows(srs_idx);
    const DataTable biased_x = population.data.select_rows(biased_idx);
    const DataTable srs = with_response(srs_x, generate_outcome(srs_x, srs_P, y_rng, config.outcome));
    const DataTable biased = with_response(biased_x, generate_outcome(biased_x, biased_P, y_rng, config.outcome));
    const DataTable reference = config.reference_size == 0
                                    ? srs_x
                                    : population.data.select_rows(draw_srs(N, config.reference_size, ref_rng));

    auto record_failure = [&](std::size_t slot, std::string kind, std::string message) {
      draw.methods[slot].failure = SimulationFailure{sim, labels[slot], std::move(kind), std::move(message)};
    };

    // Fixed-weight fits: SRS, unweighted biased, true weights.
    auto fixed_fit = [&](std::size_t slot, const DataTable& data, const Eigen::VectorXd& w, bool design) {
      try {
        const auto spec = DesignSpec::fit(data, config.outcome_covariates, Expansion::main_effects);
        const Eigen::MatrixXd Z = spec.apply(data);
        const auto y = binary_response(data, kResponse);
        const auto fit = fit_weighted_glm(Z, y, {w.data(), static_cast<std::size_t>(w.size())}, config.weighting.irls);
        auto& m = draw.methods[slot];
        m.beta = fit.beta;
        m.design_se = design_variance(fit, Z).standard_errors();
        m.analytic_se = design ? m.design_se : model_variance(fit, Z).standard_errors();
      } catch (const Error& e) {
        record_failure(slot, std::string(to_string(e.kind())), e.what());
      }
    };
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(config.sample_size));
    fixed_fit(0, srs, ones, false);
    fixed_fit(1, biased, ones, false);
    try {
      fixed_fit(2, biased, true_weights(biased_P, config.true_weight_form).values, true);
    } catch (const Error& e) {
      record_failure(2, std::string(to_string(e.kind())), e.what());
    }

    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      const std::size_t slot = 3 + k;
      PipelineConfig pc;
      pc.weighting = config.weighting;
      pc.weighting.method = config.methods[k];
      pc.weighting.covariates = config.weight_covariates;
      pc.weighting.forest.seed = derive_seed(config.seed, r, 100 + k);
      pc.outcome = {kResponse, config.outcome_covariates};
      pc.variance.design = true;
      pc.variance.proposed = config.methods[k] == WeightMethod::logistic;
      auto& m = draw.methods[slot];
      try {
        const auto res = run_pipeline(biased, reference, pc, inner);
        m.beta = res.fit.beta;
        m.design_se = res.variance(VarianceKind::design)->standard_errors();
        m.analytic_se = pc.variance.proposed ? res.variance(VarianceKind::proposed)->standard_errors() : m.design_se;
        if (r == 0) {
          const auto entries = standardized_difference(biased, reference, config.weight_covariates,
                                                       &res.weighting.weights.values);
          #pragma omp critical(propweight_balance)
          for (const auto& e : entries) balance.push_back({labels[slot], e});
        }
        if (r < boot_sims) {
          BootstrapConfig bc;
          bc.n_replicates = config.bootstrap_replicates;
          bc.strata_variable = config.strata;
          bc.seed = derive_seed(config.seed, r, 200 + k);
          try {
            const auto boot = bootstrap_pipeline(biased, reference, pc, bc, inner, &res.outcome_design);
            m.bootstrap_failed = boot.n_failed;
            if (boot.replicate_betas.size() >= 2) m.bootstrap_se = bootstrap_variance(boot).standard_errors();
          } catch (const Error& e) {
            m.bootstrap_failed = static_cast<std::size_t>(config.bootstrap_replicates);
          }
        }
      } catch (const PipelineError& e) {
        record_failure(slot, std::string(to_string(e.failure())), e.what());
      }
    }

    if (r == 0) {
      const auto entries = standardized_difference(biased, reference, config.weight_covariates, nullptr);
      #pragma omp critical(propweight_balance)
      for (const auto& e : entries) balance.push_back({"unweighted", e});
    }
  });

  SimulationReport report;
  report.coefficients = DesignSpec::fit(population.data, config.outcome_covariates, Expansion::main_effects).column_names();
  const auto p = static_cast<Eigen::Index>(report.coefficients.size());

  std::vector<Accumulated> acc(n_labels);
  for (std::size_t r = 0; r < n_sims; ++r) {
    for (std::size_t s = 0; s < n_labels; ++s) {
      auto& m = draws[r].methods[s];
      auto& a = acc[s];
      if (m.failure) {
        a.failed++;
        report.failures.push_back(*m.failure);
        continue;
      }
      a.betas.emplace_back(static_cast<int>(r), *m.beta);
      a.analytic.push_back(m.analytic_se);
      a.design.push_back(m.design_se);
      if (m.bootstrap_se.size() == p) a.bootstrap.push_back(m.bootstrap_se);
      a.bootstrap_failed += m.bootstrap_failed;
    }
  }

  auto mean_beta = [&](const Accumulated& a) {
    std::vector<Eigen::VectorXd> b;
    for (const auto& [_, v] : a.betas) b.push_back(v);
    return column_mean(b, p);
  };
  const Eigen::VectorXd srs_mean = mean_beta(acc[0]);
  const Eigen::VectorXd srs_var = column_variance(acc[0].betas, p);
  const double srs_n = static_cast<double>(acc[0].betas.size());

  for (std::size_t s = 0; s < n_labels; ++s) {
    const auto& a = acc[s];
    const Eigen::VectorXd mean = mean_beta(a);
    const Eigen::VectorXd var = column_variance(a.betas, p);
    const Eigen::VectorXd analytic = column_mean(a.analytic, p);
    const Eigen::VectorXd design = column_mean(a.design, p);
    const Eigen::VectorXd boot = column_mean(a.bootstrap, p);
    const Eigen::VectorXd bias = percent_bias(mean, srs_mean);
    const double n = static_cast<double>(a.betas.size());
    for (Eigen::Index k = 0; k < p; ++k) {
      SimulationRow row;
      row.method = labels[s];
      row.coefficient = report.coefficients[static_cast<std::size_t>(k)];
      row.mean_beta = mean(k);
      row.empirical_se = std::sqrt(var(k));
      row.mc_se = row.empirical_se / std::sqrt(n);
      row.diff_mc_se = s == 0 ? 0.0 : std::sqrt(var(k) / n + srs_var(k) / srs_n);
      row.mean_analytic_se = analytic(k);
      row.analytic_kind = s == 0 || s == 1                                                    ? "model"
                          : s >= 3 && config.methods[s - 3] == WeightMethod::logistic ? "proposed"
                                                                                        : "design";
      row.mean_design_se = design(k);
      row.mean_bootstrap_se = boot(k);
      row.percent_bias = s == 0 ? 0.0 : bias(k);
      row.design_effect = srs_var(k) > 0.0 ? var(k) / srs_var(k) : kNaN;
      row.n_success = a.betas.size();
      row.n_failed = a.failed;
      row.bootstrap_sims = a.bootstrap.size();
      row.bootstrap_failed_replicates = a.bootstrap_failed;
      (s == 0 ? report.reference : report.rows).push_back(row);
    }
    if (config.keep_replicates) report.betas[labels[s]] = a.betas;
  }

  // Balance rows in a fixed order regardless of which thread produced them.
  std::stable_sort(balance.begin(), balance.end(), [&](const BalanceRow& x, const BalanceRow& y) {
    auto rank = [&](const std::string& m) {
      return m == "unweighted" ? std::size_t{0}
                               : static_cast<std::size_t>(std::find(labels.begin(), labels.end(), m) - labels.begin());
    };
    return rank(x.method) < rank(y.method);
  });
  report.balance = std::move(balance);
  return report;
}

}  // namespace propweight
