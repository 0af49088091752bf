#include "propweight/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "propweight/outcome.hpp"
#include "propweight/pipeline.hpp"
#include "propweight/report.hpp"

namespace propweight {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) fail(ErrorKind::ConfigError, label("") + " must be a JSON object");
  }

  template <typename T>
  std::optional<T> get(const std::string& key) {
    seen_.insert(key);
    if (!doc_.contains(key)) return std::nullopt;
    const json& v = doc_.at(key);
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>)
      ok = v.is_boolean();
    else if constexpr (std::is_integral_v<T>)
      ok = v.is_number_integer() && (std::is_signed_v<T> || v.get<long long>() >= 0);
    else if constexpr (std::is_floating_point_v<T>)
      ok = v.is_number();
    else if constexpr (std::is_same_v<T, std::string>)
      ok = v.is_string();
    else if constexpr (std::is_same_v<T, std::vector<std::string>>)
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    if (!ok) fail(ErrorKind::ConfigError, "config key '" + label(key) + "' has the wrong type");
    return v.get<T>();
  }

  template <typename T>
  void set(const std::string& key, T& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  std::string label(const std::string& key) const {
    if (where_.empty()) return key.empty() ? "config" : key;
    return key.empty() ? where_ : where_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, _] : doc_.items())
      if (!seen_.count(key)) fail(ErrorKind::ConfigError, "unknown config key '" + label(key) + "'");
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

template <typename F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) fail(ErrorKind::ConfigError, e.what());
    throw;
  }
}

void read_forest(ObjectReader& r, WeightingConfig& w) {
  if (const json* f = r.child("forest")) {
    ObjectReader fr(*f, r.label("forest"));
    fr.set("n_trees", w.forest.n_trees);
    fr.set("mtry", w.forest.mtry);
    fr.set("min_leaf", w.forest.min_leaf);
    fr.set("max_depth", w.forest.max_depth);
    fr.set("out_of_bag", w.forest_out_of_bag);
    fr.finish();
    if (w.forest.n_trees < 1 || w.forest.mtry < 0 || w.forest.min_leaf < 1 || w.forest.max_depth < 0)
      fail(ErrorKind::ConfigError, "forest settings out of range");
  }
  if (const json* c = r.child("cbps")) {
    ObjectReader cr(*c, r.label("cbps"));
    cr.set("balance_moments", w.cbps.balance_moments);
    cr.set("max_iterations", w.cbps.max_iterations);
    cr.finish();
  }
  r.set("stepwise", w.stepwise);
  r.set("eb_degree", w.eb_degree);
  if (w.eb_degree < 1) fail(ErrorKind::ConfigError, "eb_degree must be at least 1");
  if (auto n = r.get<std::string>("normalization"))
    w.normalization = as_config_error([&] { return normalization_from_string(*n); });
}

std::vector<WeightMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<WeightMethod> out;
  for (const auto& n : names) {
    const auto m = as_config_error([&] { return weight_method_from_string(n); });
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

OutputMeta meta_for(std::uint64_t seed, const json& effective) { return {seed, config_hash(effective)}; }

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create output directory '" + dir.string() + "': " + ec.message());
}

// Data loading shared by balance and estimate.
struct LoadedInputs {
  Schema schema;
  std::vector<DataTable> convenience;  // one per imputation
  DataTable representative;
  std::size_t representative_source_rows = 0;
  double inflation_ratio = 1.0;
};

Schema covariate_schema(const Schema& schema, const std::vector<std::string>& covariates) {
  Schema out;
  for (const auto& name : covariates) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const VariableSpec& v) { return v.name == name; });
    if (it == schema.end()) fail(ErrorKind::UnknownColumn, "covariate '" + name + "' is not in the schema");
    out.push_back(*it);
  }
  return out;
}

LoadedInputs load_inputs(const RunConfig& cfg) {
  LoadedInputs in;
  in.schema = load_schema(cfg.schema);
  CsvOptions conv_opts{cfg.missing, cfg.allow_extra_columns};
  const auto files = cfg.imputed_convenience_csvs.empty() ? std::vector<fs::path>{cfg.convenience_csv}
                                                          : cfg.imputed_convenience_csvs;
  for (const auto& f : files) in.convenience.push_back(load_csv(f, in.schema, conv_opts).table);

  Schema rep_schema = covariate_schema(in.schema, cfg.weighting.covariates);
  CsvOptions rep_opts{cfg.missing, true};
  if (cfg.representative_kind == RepresentativeKind::survey_with_weights) {
    rep_schema.push_back(VariableSpec::continuous(cfg.weight_column));
    const DataTable raw = load_csv(cfg.representative_csv, rep_schema, rep_opts).table;
    const auto survey = make_survey_sample(raw.select_columns(cfg.weighting.covariates), raw.numeric(cfg.weight_column));
    const auto pseudo = expand_pseudopopulation(survey);
    in.representative = pseudo.data;
    in.representative_source_rows = raw.rows();
    in.inflation_ratio = pseudo.inflation_ratio;
  } else {
    in.representative = load_csv(cfg.representative_csv, rep_schema, rep_opts).table;
    in.representative_source_rows = in.representative.rows();
  }
  return in;
}

WeightingConfig weighting_for(const RunConfig& cfg, WeightMethod method) {
  WeightingConfig w = cfg.weighting;
  w.method = method;
  w.forest.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(method), 7);
  return w;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};

Summary weighted_summary(const std::vector<double>& x, const Eigen::VectorXd* w) {
  double sw = 0.0, m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w ? (*w)(static_cast<Eigen::Index>(i)) : 1.0;
    sw += wi;
    m += wi * x[i];
  }
  m /= sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w ? (*w)(static_cast<Eigen::Index>(i)) : 1.0;
    ss += wi * (x[i] - m) * (x[i] - m);
  }
  // Unweighted columns use the n - 1 sample SD; weighted ones the weighted population form.
  const double denom = w ? sw : sw - 1.0;
  return {m, denom > 0.0 ? std::sqrt(ss / denom) : 0.0};
}

std::vector<double> indicator(const std::vector<int>& codes, int level) {
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = codes[i] == level ? 1.0 : 0.0;
  return out;
}

}  // namespace

VarianceChoice variance_choice_from_string(std::string_view text) {
  VarianceChoice v;
  for (const auto& item : split_list(std::string(text))) {
    if (item == "design") v.design = true;
    else if (item == "proposed") v.proposed = true;
    else if (item == "bootstrap") v.bootstrap = true;
    else if (item == "model") v.model = true;
    else if (item == "all") v.design = v.proposed = v.bootstrap = v.all = true;
    else fail(ErrorKind::ConfigError, "unknown variance kind '" + item + "'");
  }
  if (!v.design && !v.proposed && !v.bootstrap && !v.model)
    fail(ErrorKind::ConfigError, "no variance kind requested");
  return v;
}

std::string config_hash(const json& effective) {
  json copy = effective;
  copy.erase("output_dir");
  copy.erase("threads");
  return fnv1a_hex(copy.dump());
}

RunConfig parse_run_config(const json& doc, const fs::path& base) {
  RunConfig cfg;
  ObjectReader r(doc, "");
  if (auto v = r.get<std::string>("convenience_csv")) cfg.convenience_csv = resolve(base, *v);
  if (auto v = r.get<std::string>("representative_csv")) cfg.representative_csv = resolve(base, *v);
  if (auto v = r.get<std::string>("schema")) cfg.schema = resolve(base, *v);
  if (auto v = r.get<std::string>("representative_kind")) {
    if (*v == "pseudopopulation") cfg.representative_kind = RepresentativeKind::pseudopopulation;
    else if (*v == "survey_with_weights") cfg.representative_kind = RepresentativeKind::survey_with_weights;
    else fail(ErrorKind::ConfigError, "unknown representative_kind '" + *v + "'");
  }
  r.set("weight_column", cfg.weight_column);
  if (auto v = r.get<std::string>("weight_method"))
    cfg.weighting.method = as_config_error([&] { return weight_method_from_string(*v); });
  if (auto v = r.get<std::vector<std::string>>("balance_methods")) cfg.balance_methods = parse_methods(*v);
  r.set("covariates", cfg.weighting.covariates);
  if (const json* o = r.child("outcome")) {
    ObjectReader orr(*o, "outcome");
    if (const json* resp = orr.child("response")) {
      if (resp->is_string())
        cfg.responses = {resp->get<std::string>()};
      else if (resp->is_array() && std::all_of(resp->begin(), resp->end(), [](const json& e) { return e.is_string(); }))
        cfg.responses = resp->get<std::vector<std::string>>();
      else
        fail(ErrorKind::ConfigError, "outcome.response must be a string or a list of strings");
    }
    orr.set("covariates", cfg.outcome_covariates);
    orr.finish();
  }
  if (auto v = r.get<std::string>("variance")) cfg.variance = variance_choice_from_string(*v);
  if (const json* b = r.child("bootstrap")) {
    ObjectReader br(*b, "bootstrap");
    br.set("n_replicates", cfg.bootstrap.n_replicates);
    br.set("strata_variable", cfg.bootstrap.strata_variable);
    br.set("resample_representative", cfg.bootstrap.resample_representative);
    br.finish();
    if (cfg.bootstrap.n_replicates < 0) fail(ErrorKind::ConfigError, "bootstrap.n_replicates must be non-negative");
  }
  if (auto v = r.get<std::vector<std::string>>("imputed_convenience_csvs"))
    for (const auto& p : *v) cfg.imputed_convenience_csvs.push_back(resolve(base, p));
  if (auto v = r.get<std::string>("missing")) {
    if (*v == "reject") cfg.missing = MissingPolicy::reject;
    else if (*v == "drop_rows") cfg.missing = MissingPolicy::drop_rows;
    else fail(ErrorKind::ConfigError, "missing must be 'reject' or 'drop_rows'");
  }
  r.set("allow_extra_columns", cfg.allow_extra_columns);
  if (auto v = r.get<std::string>("output_dir")) cfg.output_dir = *v;
  r.set("seed", cfg.seed);
  r.set("threads", cfg.threads);
  read_forest(r, cfg.weighting);
  r.finish();
  const auto m = cfg.weighting.method;
  if (cfg.variance.all && m != WeightMethod::logistic && m != WeightMethod::cbps) cfg.variance.proposed = false;
  cfg.bootstrap.seed = derive_seed(cfg.seed, 0, 11);
  return cfg;
}

SimulateRunConfig parse_simulate_config(const json& doc, const fs::path& base) {
  SimulateRunConfig cfg;
  auto& s = cfg.simulation;
  ObjectReader r(doc, "");
  r.set("n_sims", s.n_sims);
  r.set("sample_size", s.sample_size);
  r.set("reference_size", s.reference_size);
  r.set("bootstrap_replicates", s.bootstrap_replicates);
  r.set("bootstrap_sims", s.bootstrap_sims);
  if (auto v = r.get<std::vector<std::string>>("methods")) s.methods = parse_methods(*v);
  r.set("seed", s.seed);
  r.set("population_size", cfg.population_size);
  if (auto v = r.get<std::string>("population_csv")) cfg.population_csv = resolve(base, *v);
  if (auto v = r.get<std::string>("output_dir")) cfg.output_dir = *v;
  r.set("threads", cfg.threads);
  if (auto v = r.get<std::string>("true_weight_form")) {
    if (*v == "odds") s.true_weight_form = TrueWeightForm::odds;
    else if (*v == "inverse") s.true_weight_form = TrueWeightForm::inverse;
    else fail(ErrorKind::ConfigError, "true_weight_form must be 'odds' or 'inverse'");
  }
  r.set("keep_replicates", s.keep_replicates);
  read_forest(r, s.weighting);
  r.finish();
  if (s.n_sims < 1 || s.sample_size < 1) fail(ErrorKind::ConfigError, "n_sims and sample_size must be positive");
  if (s.bootstrap_replicates < 0) fail(ErrorKind::ConfigError, "bootstrap_replicates must be non-negative");
  if (cfg.population_size < 1000) fail(ErrorKind::ConfigError, "population_size must be at least 1000");
  return cfg;
}

void validate_run_config(const RunConfig& cfg, bool estimate) {
  if (cfg.schema.empty()) fail(ErrorKind::ConfigError, "no schema file given");
  if (cfg.representative_csv.empty()) fail(ErrorKind::ConfigError, "no representative_csv given");
  if (cfg.convenience_csv.empty() && cfg.imputed_convenience_csvs.empty())
    fail(ErrorKind::ConfigError, "no convenience_csv given");
  if (cfg.weighting.covariates.empty()) fail(ErrorKind::ConfigError, "no weight-model covariates given");
  if (cfg.representative_kind == RepresentativeKind::survey_with_weights && cfg.weight_column.empty())
    fail(ErrorKind::ConfigError, "survey_with_weights needs weight_column");
  if (!estimate) return;
  if (cfg.responses.empty()) fail(ErrorKind::ConfigError, "outcome.response is not set");
  const auto m = cfg.weighting.method;
  if (cfg.variance.proposed && m != WeightMethod::logistic && m != WeightMethod::cbps)
    fail(ErrorKind::UnsupportedForProposedVariance,
         "proposed variance needs a logistic or cbps weight model, not " + std::string(to_string(m)));
  if (cfg.variance.bootstrap && cfg.bootstrap.n_replicates < 2)
    fail(ErrorKind::ConfigError, "bootstrap variance needs at least two replicates");
}

void cmd_balance(const RunConfig& cfg, const json& effective) {
  validate_run_config(cfg, false);
  const auto in = load_inputs(cfg);
  const DataTable& conv = in.convenience.front();
  const DataTable& rep = in.representative;
  const auto methods = cfg.balance_methods.empty()
                           ? std::vector<WeightMethod>{WeightMethod::logistic, WeightMethod::cbps,
                                                       WeightMethod::entropy_balancing, WeightMethod::random_forest}
                           : cfg.balance_methods;
  const auto combined = combine(conv, rep, cfg.weighting.covariates);
  std::vector<WeightingResult> fits;
  for (auto m : methods) fits.push_back(estimate_weights(combined, weighting_for(cfg, m)));

  const auto meta = meta_for(cfg.seed, effective);
  prepare_output(cfg.output_dir);

  CsvRow summary_header{"covariate", "level", "statistic", "representative", "unweighted"};
  CsvRow diff_header{"covariate", "level", "unweighted"};
  for (auto m : methods) {
    summary_header.emplace_back(to_string(m));
    diff_header.emplace_back(to_string(m));
  }
  std::vector<CsvRow> summary_rows, diff_rows;
  json body;
  body["representative_rows"] = rep.rows();
  body["representative_source_rows"] = in.representative_source_rows;
  body["inflation_ratio"] = in.inflation_ratio;
  body["convenience_rows"] = conv.rows();
  body["methods"] = json::object();

  auto add_summary = [&](const std::string& cov, const std::string& level, const std::vector<double>& cx,
                         const std::vector<double>& rx, bool continuous) {
    const auto rs = weighted_summary(rx, nullptr);
    const auto us = weighted_summary(cx, nullptr);
    CsvRow mean_row{cov, level, continuous ? "mean" : "proportion", format_number(rs.mean), format_number(us.mean)};
    CsvRow sd_row{cov, level, "sd", format_number(rs.sd), format_number(us.sd)};
    for (const auto& f : fits) {
      const auto ws = weighted_summary(cx, &f.weights.values);
      mean_row.push_back(format_number(ws.mean));
      sd_row.push_back(format_number(ws.sd));
    }
    summary_rows.push_back(mean_row);
    if (continuous) summary_rows.push_back(sd_row);
  };
  for (const auto& name : cfg.weighting.covariates) {
    const auto& spec = conv.spec(conv.column_index(name));
    if (!spec.is_categorical()) {
      add_summary(name, "", conv.numeric(name), rep.numeric(name), true);
      continue;
    }
    for (std::size_t l = 0; l < spec.levels.size(); ++l)
      add_summary(name, spec.levels[l], indicator(conv.codes(name), static_cast<int>(l)),
                  indicator(rep.codes(name), static_cast<int>(l)), false);
  }

  const auto unweighted = standardized_difference(conv, rep, cfg.weighting.covariates);
  std::vector<std::vector<BalanceEntry>> weighted;
  for (const auto& f : fits)
    weighted.push_back(standardized_difference(conv, rep, cfg.weighting.covariates, &f.weights.values));
  for (std::size_t k = 0; k < unweighted.size(); ++k) {
    CsvRow row{unweighted[k].covariate, unweighted[k].level, format_number(unweighted[k].difference)};
    for (const auto& w : weighted) row.push_back(format_number(w[k].difference));
    diff_rows.push_back(std::move(row));
  }

  std::vector<CsvRow> weight_rows;
  CsvRow weight_header{"row"};
  for (auto m : methods) weight_header.push_back(std::string(to_string(m)) + "_weight");
  for (std::size_t i = 0; i < conv.rows(); ++i) {
    CsvRow row{std::to_string(i)};
    for (const auto& f : fits) row.push_back(format_number(f.weights.values(static_cast<Eigen::Index>(i))));
    weight_rows.push_back(std::move(row));
  }

  auto diff_json = [](const std::vector<BalanceEntry>& entries) {
    json j = json::array();
    for (const auto& e : entries)
      j.push_back({{"covariate", e.covariate}, {"level", e.level}, {"standardized_difference", e.difference}});
    return j;
  };
  body["unweighted"] = diff_json(unweighted);
  for (std::size_t k = 0; k < fits.size(); ++k)
    body["methods"][std::string(to_string(methods[k]))] = {{"standardized_differences", diff_json(weighted[k])},
                                                           {"diagnostics", fits[k].model.diagnostics}};
  write_csv_file(cfg.output_dir / "balance_summary.csv", meta, summary_header, summary_rows);
  write_csv_file(cfg.output_dir / "balance_std_diff.csv", meta, diff_header, diff_rows);
  write_csv_file(cfg.output_dir / "balance_weights.csv", meta, weight_header, weight_rows);
  body["config"] = effective;
  write_json_file(cfg.output_dir / "balance.json", meta, body);
}

namespace {

struct ResponseFit {
  std::string response;
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  std::vector<VarianceEstimate> variances;
  const VarianceEstimate* primary = nullptr;
  BootstrapResult bootstrap;
  bool bootstrap_ok = false;
  std::string bootstrap_error;
  std::vector<std::string> warnings;
};

const VarianceEstimate* pick_primary(const std::vector<VarianceEstimate>& vs) {
  for (auto kind : {VarianceKind::proposed, VarianceKind::design, VarianceKind::bootstrap, VarianceKind::model})
    for (const auto& v : vs)
      if (v.kind == kind) return &v;
  return nullptr;
}

json variance_json(const VarianceEstimate& v) {
  json j{{"kind", to_string(v.kind)}, {"matrix", matrix_json(v.matrix)}, {"warnings", v.warnings}};
  if (v.kind == VarianceKind::proposed) {
    j["correction"] = matrix_json(v.correction);
    j["not_psd"] = v.not_psd;
  }
  return j;
}

void write_fit_outputs(const fs::path& dir, const OutputMeta& meta, const std::vector<ResponseFit>& fits,
                       const WeightingResult& weights, json& body) {
  prepare_output(dir);
  CsvRow header{"response", "term", "estimate", "se_model", "se_design", "se_proposed", "se_bootstrap",
                "variance_kind", "odds_ratio", "ci_low", "ci_high"};
  std::vector<CsvRow> rows;
  std::map<VarianceKind, std::vector<CsvRow>> matrices;
  json responses = json::array();
  for (const auto& f : fits) {
    auto se_of = [&](VarianceKind kind, Eigen::Index k) {
      for (const auto& v : f.variances)
        if (v.kind == kind) return format_number(v.standard_errors()(k));
      return std::string("NA");
    };
    const auto table = report_odds_ratios(f.beta, f.primary->matrix, f.names, 0.95, {}, true);
    for (Eigen::Index k = 0; k < f.beta.size(); ++k) {
      const auto& t = table[static_cast<std::size_t>(k)];
      rows.push_back({f.response, t.term, format_number(t.estimate), se_of(VarianceKind::model, k),
                      se_of(VarianceKind::design, k), se_of(VarianceKind::proposed, k),
                      se_of(VarianceKind::bootstrap, k), std::string(to_string(f.primary->kind)),
                      format_number(t.odds_ratio), format_number(t.ci_low), format_number(t.ci_high)});
    }
    json r{{"response", f.response}, {"terms", f.names}, {"beta", vector_json(f.beta)},
           {"variances", json::array()}, {"warnings", f.warnings}};
    for (const auto& v : f.variances) {
      r["variances"].push_back(variance_json(v));
      for (auto& row : matrix_rows(v.matrix, f.names)) {
        row.insert(row.begin(), f.response);
        matrices[v.kind].push_back(std::move(row));
      }
    }
    if (f.bootstrap.n_replicates > 0 || !f.bootstrap_error.empty()) {
      json b{{"n_replicates", f.bootstrap.n_replicates}, {"n_failed", f.bootstrap.n_failed},
             {"failures", json::array()}};
      for (const auto& fl : f.bootstrap.failures)
        b["failures"].push_back({{"replicate", fl.replicate}, {"kind", to_string(fl.kind)}, {"message", fl.message}});
      if (!f.bootstrap_error.empty()) b["error"] = f.bootstrap_error;
      r["bootstrap"] = b;
    }
    responses.push_back(r);
  }
  write_csv_file(dir / "coefficients.csv", meta, header, rows);
  for (const auto& [kind, mrows] : matrices) {
    CsvRow mh{"response", "term"};
    for (const auto& n : fits.front().names) mh.push_back(n);
    write_csv_file(dir / ("variance_" + std::string(to_string(kind)) + ".csv"), meta, mh, mrows);
  }
  std::vector<CsvRow> wrows;
  const auto n_conv = weights.weights.values.size();
  for (Eigen::Index i = 0; i < n_conv; ++i)
    wrows.push_back({std::to_string(i), format_number(weights.probabilities.values(i)),
                     format_number(weights.weights.values(i))});
  write_csv_file(dir / "weights.csv", meta, {"row", "membership_probability", "weight"}, wrows);
  write_json_file(dir / "weight_model.json", meta, model_to_json(weights.model));
  body["responses"] = responses;
  body["weight_diagnostics"] = weights.model.diagnostics;
}

void write_or_table(const fs::path& dir, const OutputMeta& meta,
                    const std::vector<std::pair<std::string, std::vector<OddsRatioRow>>>& tables) {
  std::vector<CsvRow> long_rows;
  for (const auto& [response, rows] : tables)
    for (const auto& r : rows)
      long_rows.push_back({response, r.term, format_number(r.odds_ratio), format_number(r.ci_low),
                           format_number(r.ci_high)});
  write_csv_file(dir / "odds_ratios.csv", meta, {"response", "term", "odds_ratio", "ci_low", "ci_high"}, long_rows);

  // One row per response, one column per contrast: "OR (low, high)".
  CsvRow header{"response"};
  if (!tables.empty())
    for (const auto& r : tables.front().second) header.push_back(r.term);
  std::vector<CsvRow> wide;
  for (const auto& [response, rows] : tables) {
    CsvRow row{response};
    for (const auto& r : rows) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.2f (%.2f, %.2f)", r.odds_ratio, r.ci_low, r.ci_high);
      row.push_back(buf);
    }
    wide.push_back(std::move(row));
  }
  write_csv_file(dir / "odds_ratio_table.csv", meta, header, wide);
}

}  // namespace

void cmd_estimate(const RunConfig& cfg, const json& effective) {
  validate_run_config(cfg, true);
  const auto in = load_inputs(cfg);
  const auto meta = meta_for(cfg.seed, effective);
  prepare_output(cfg.output_dir);

  const std::size_t M = in.convenience.size();
  // fits[d][r] for imputation d and response r.
  std::vector<std::vector<ResponseFit>> fits(M);
  std::vector<WeightingResult> weightings(M);
  for (std::size_t d = 0; d < M; ++d) {
    for (std::size_t ri = 0; ri < cfg.responses.size(); ++ri) {
      PipelineConfig pc;
      pc.weighting = weighting_for(cfg, cfg.weighting.method);
      pc.outcome = {cfg.responses[ri], cfg.outcome_covariates};
      pc.variance = {cfg.variance.model, cfg.variance.design, cfg.variance.proposed};
      auto res = run_pipeline(in.convenience[d], in.representative, pc);
      ResponseFit f;
      f.response = cfg.responses[ri];
      f.names = res.coefficient_names();
      f.beta = res.fit.beta;
      f.variances = res.variances;
      f.warnings = res.warnings;
      if (cfg.variance.bootstrap) {
        BootstrapConfig bc = cfg.bootstrap;
        bc.seed = derive_seed(cfg.bootstrap.seed, d, ri);
        try {
          f.bootstrap = bootstrap_pipeline(in.convenience[d], in.representative, pc, bc, Execution::parallel,
                                           &res.outcome_design);
          f.variances.push_back(bootstrap_variance(f.bootstrap));
          f.bootstrap_ok = true;
        } catch (const Error& e) {
          f.bootstrap_error = std::string(to_string(e.kind())) + ": " + e.what();
          f.warnings.push_back("bootstrap variance unavailable: " + f.bootstrap_error);
        }
      }
      fits[d].push_back(std::move(f));
      if (ri == 0) weightings[d] = std::move(res.weighting);
    }
    for (auto& f : fits[d]) f.primary = pick_primary(f.variances);
  }

  json body;
  body["config"] = effective;
  body["imputations"] = M;
  if (M == 1) {
    write_fit_outputs(cfg.output_dir, meta, fits[0], weightings[0], body);
    std::vector<std::pair<std::string, std::vector<OddsRatioRow>>> tables;
    for (const auto& f : fits[0])
      tables.emplace_back(f.response, report_odds_ratios(f.beta, f.primary->matrix, f.names));
    write_or_table(cfg.output_dir, meta, tables);
    write_json_file(cfg.output_dir / "summary.json", meta, body);
    return;
  }

  body["per_imputation"] = json::array();
  for (std::size_t d = 0; d < M; ++d) {
    json sub;
    write_fit_outputs(cfg.output_dir / ("imputation_" + std::to_string(d + 1)), meta, fits[d], weightings[d], sub);
    body["per_imputation"].push_back(sub);
  }
  std::vector<std::pair<std::string, std::vector<OddsRatioRow>>> tables;
  std::vector<CsvRow> pooled_rows;
  json pooled = json::array();
  for (std::size_t ri = 0; ri < cfg.responses.size(); ++ri) {
    std::vector<Eigen::VectorXd> betas;
    std::vector<Eigen::MatrixXd> vars;
    for (std::size_t d = 0; d < M; ++d) {
      betas.push_back(fits[d][ri].beta);
      vars.push_back(fits[d][ri].primary->matrix);
    }
    const auto pe = pool_rubin(betas, vars);
    const auto& names = fits[0][ri].names;
    const auto all = report_odds_ratios(pe.beta_bar, pe.total, names, 0.95, pe.df, true);
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      pooled_rows.push_back({cfg.responses[ri], names[k], format_number(pe.beta_bar(kk)),
                             format_number(pe.within(kk, kk)), format_number(pe.between(kk, kk)),
                             format_number(pe.total(kk, kk)), format_number(std::sqrt(pe.total(kk, kk))),
                             format_number(pe.df(kk)), format_number(all[k].odds_ratio),
                             format_number(all[k].ci_low), format_number(all[k].ci_high)});
    }
    tables.emplace_back(cfg.responses[ri], report_odds_ratios(pe.beta_bar, pe.total, names, 0.95, pe.df));
    pooled.push_back({{"response", cfg.responses[ri]},
                      {"terms", names},
                      {"beta_bar", vector_json(pe.beta_bar)},
                      {"within", matrix_json(pe.within)},
                      {"between", matrix_json(pe.between)},
                      {"total", matrix_json(pe.total)},
                      {"df", vector_json(pe.df)},
                      {"variance_kind", to_string(fits[0][ri].primary->kind)}});
  }
  write_csv_file(cfg.output_dir / "pooled_coefficients.csv", meta,
                 {"response", "term", "estimate", "within", "between", "total", "se", "df", "odds_ratio",
                  "ci_low", "ci_high"},
                 pooled_rows);
  write_or_table(cfg.output_dir, meta, tables);
  body["pooled"] = pooled;
  write_json_file(cfg.output_dir / "summary.json", meta, body);
}

void cmd_simulate(const SimulateRunConfig& cfg, const json& effective) {
  const auto& s = cfg.simulation;
  FinitePopulation population;
  if (cfg.population_csv.empty()) {
    population = synthetic_population(cfg.population_size, derive_seed(s.seed, 0, 99));
  } else {
    population.data = load_csv(cfg.population_csv, simulation_schema(), {MissingPolicy::reject, true}).table;
  }
  const auto report = run_simulation(s, population);
  const auto meta = meta_for(s.seed, effective);
  prepare_output(cfg.output_dir);
  write_csv_file(cfg.output_dir / "simulation_report.csv", meta, simulation_header(), simulation_rows(report.rows));
  write_csv_file(cfg.output_dir / "simulation_reference.csv", meta, simulation_header(),
                 simulation_rows(report.reference));
  std::vector<CsvRow> balance;
  for (const auto& b : report.balance)
    balance.push_back({b.method, b.entry.covariate, b.entry.level, format_number(b.entry.difference)});
  write_csv_file(cfg.output_dir / "simulation_balance.csv", meta,
                 {"method", "covariate", "level", "standardized_difference"}, balance);
  std::vector<CsvRow> failures;
  for (const auto& f : report.failures) failures.push_back({std::to_string(f.sim), f.method, f.kind, f.message});
  write_csv_file(cfg.output_dir / "simulation_failures.csv", meta, {"sim", "method", "kind", "message"}, failures);
  if (s.keep_replicates) {
    CsvRow header{"method", "sim"};
    for (const auto& c : report.coefficients) header.push_back(c);
    std::vector<CsvRow> rows;
    for (const auto& [method, betas] : report.betas)
      for (const auto& [sim, beta] : betas) {
        CsvRow row{method, std::to_string(sim)};
        for (Eigen::Index k = 0; k < beta.size(); ++k) row.push_back(format_number(beta(k)));
        rows.push_back(std::move(row));
      }
    write_csv_file(cfg.output_dir / "simulation_betas.csv", meta, header, rows);
  }
  json body = simulation_json(report);
  body["config"] = effective;
  write_json_file(cfg.output_dir / "simulation_report.json", meta, body);
}

namespace {

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, "config file '" + path + "': " + e.what());
  }
}

void emit_error(std::ostream& err, std::string_view kind, std::string_view message) {
  err << json{{"kind", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"propweight: propensity weights for convenience samples"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);

  std::string config_path, output_dir, schema, convenience, representative, method, variance, methods, population_csv;
  std::uint64_t seed = 0;
  int threads = 0, n_sims = 0, bootstrap = 0;
  std::size_t n = 0;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", config_path, "JSON configuration file");
    if (config_required) c->required();
    sub->add_option("--output-dir", output_dir, "Directory for output files");
    sub->add_option("--seed", seed, "RNG seed");
    sub->add_option("--threads", threads, "Maximum worker threads")->check(CLI::NonNegativeNumber);
  };
  auto* balance = app.add_subcommand("balance", "Covariate balance before and after weighting");
  auto* estimate = app.add_subcommand("estimate", "Weights, weighted outcome model and variances");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation study");
  for (auto* sub : {balance, estimate}) {
    common(sub, true);
    sub->add_option("--schema", schema, "Schema file (overrides the config)");
    sub->add_option("--convenience", convenience, "Convenience sample CSV");
    sub->add_option("--representative", representative, "Representative sample CSV");
  }
  estimate->add_option("--method", method, "Weight method: logistic, cbps, eb, rf");
  estimate->add_option("--variance", variance, "design, proposed, bootstrap, model or all");
  balance->add_option("--methods", methods, "Comma-separated weight methods");
  common(simulate, false);
  simulate->add_option("--methods", methods, "Comma-separated weight methods");
  simulate->add_option("--n-sims", n_sims, "Number of simulated datasets")->check(CLI::PositiveNumber);
  simulate->add_option("--n", n, "Sample size of each draw")->check(CLI::PositiveNumber);
  simulate->add_option("--bootstrap", bootstrap, "Bootstrap replicates per simulated dataset")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--population-csv", population_csv, "Population CSV instead of the synthetic one");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      fail(ErrorKind::ConfigError, e.what());
    }

    json doc = json::object();
    fs::path base;
    if (!config_path.empty()) {
      doc = read_config_file(config_path);
      if (!doc.is_object()) fail(ErrorKind::ConfigError, "config file must hold a JSON object");
      base = fs::path(config_path).parent_path();
    }
    auto* active = app.get_subcommands().front();
    // Flag paths are relative to the working directory, so make them absolute.
    auto flag_path = [](const std::string& p) { return fs::absolute(p).string(); };
    auto given = [&](const char* name) {
      const auto* opt = active->get_option_no_throw(name);
      return opt && opt->count() > 0;
    };
    if (given("--output-dir")) doc["output_dir"] = output_dir;
    if (given("--seed")) doc["seed"] = seed;
    if (given("--threads")) doc["threads"] = threads;
    if (given("--schema")) doc["schema"] = flag_path(schema);
    if (given("--convenience")) doc["convenience_csv"] = flag_path(convenience);
    if (given("--representative")) doc["representative_csv"] = flag_path(representative);
    if (given("--method")) doc["weight_method"] = method;
    if (given("--variance")) doc["variance"] = variance;
    if (given("--methods")) doc[active == balance ? "balance_methods" : "methods"] = split_list(methods);
    if (given("--n-sims")) doc["n_sims"] = n_sims;
    if (given("--n")) doc["sample_size"] = n;
    if (given("--bootstrap")) doc["bootstrap_replicates"] = bootstrap;
    if (given("--population-csv")) doc["population_csv"] = flag_path(population_csv);

    if (active == simulate) {
      const auto cfg = parse_simulate_config(doc, base);
      set_thread_limit(cfg.threads);
      cmd_simulate(cfg, doc);
    } else {
      const auto cfg = parse_run_config(doc, base);
      set_thread_limit(cfg.threads);
      validate_run_config(cfg, active == estimate);
      if (active == balance)
        cmd_balance(cfg, doc);
      else
        cmd_estimate(cfg, doc);
    }
    return 0;
  } catch (const Error& e) {
    emit_error(err, to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::UnsupportedForProposedVariance ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    emit_error(err, "IoError", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error(err, "InternalError", e.what());
    return 1;
  }
}

}  // namespace propweight
