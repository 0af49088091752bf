#include "doctest.h"

#include <set>
#include <sstream>

#include "helpers.hpp"
#include "json.hpp"
#include "propweight/cli.hpp"
#include "propweight/error.hpp"
#include "propweight/report.hpp"
#include "propweight/simulation.hpp"

using namespace propweight;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "propweight");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string table_csv(const DataTable& t, const std::vector<double>* y) {
  std::ostringstream os;
  for (std::size_t c = 0; c < t.cols(); ++c) os << (c ? "," : "") << t.spec(c).name;
  if (y) os << ",y";
  os << "\n";
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) os << ",";
      if (t.spec(c).is_categorical())
        os << t.spec(c).levels[static_cast<std::size_t>(t.codes(c)[i])];
      else
        os << t.numeric(c)[i];
    }
    if (y) os << "," << (*y)[i];
    os << "\n";
  }
  return os.str();
}

// Writes schema.json, convenience.csv, representative.csv and a config.
fs::path make_inputs(const std::string& name, const nlohmann::json& extra) {
  const auto dir = testing::temp_dir(name);
  const auto pop = synthetic_population(6000, 33);
  const Eigen::VectorXd P = biased_sampling_probability(pop.data);
  auto rng = make_stream(33, 1);
  const auto conv = pop.data.select_rows(draw_biased(P, 300, rng));
  const auto rep = pop.data.select_rows(draw_srs(pop.size(), 900, rng));
  Eigen::VectorXd Pc = biased_sampling_probability(conv);
  const auto y = generate_outcome(conv, Pc, rng);

  auto schema = schema_to_json(simulation_schema());
  schema["variables"].push_back({{"name", "y"}, {"kind", "continuous"}});
  testing::write_file(dir / "schema.json", schema.dump(2));
  testing::write_file(dir / "convenience.csv", table_csv(conv, &y));
  testing::write_file(dir / "representative.csv", table_csv(rep, nullptr));

  nlohmann::json cfg = {{"schema", "schema.json"},
                        {"convenience_csv", "convenience.csv"},
                        {"representative_csv", "representative.csv"},
                        {"covariates", {"age", "sex", "education", "race_ethnicity", "exercise"}},
                        {"outcome", {{"response", "y"}, {"covariates", {"race_ethnicity"}}}},
                        {"output_dir", (dir / "out").string()},
                        {"forest", {{"n_trees", 40}}}};
  cfg.update(extra);
  testing::write_file(dir / "config.json", cfg.dump(2));
  return dir;
}

nlohmann::json parse_error(const std::string& err) { return nlohmann::json::parse(err); }

}  // namespace

TEST_CASE("missing schema file is a configuration error") {
  const auto dir = make_inputs("cli_schema", {{"schema", "nope.json"}});
  const auto r = run({"balance", "--config", (dir / "config.json").string()});
  CHECK(r.code == 2);
  const auto e = parse_error(r.err);
  CHECK(e["kind"] == "ConfigError");
  CHECK(e.contains("message"));
}

TEST_CASE("unknown config keys and bad flags are rejected") {
  const auto dir = make_inputs("cli_keys", {{"colour", "blue"}});
  auto r = run({"estimate", "--config", (dir / "config.json").string()});
  CHECK(r.code == 2);
  CHECK(parse_error(r.err)["kind"] == "ConfigError");
  r = run({"simulate", "--n-sims", "0"});
  CHECK(r.code == 2);
  r = run({"estimate"});
  CHECK(r.code == 2);
}

TEST_CASE("random forest with the proposed variance fails validation") {
  const auto dir = make_inputs("cli_rf", nlohmann::json::object());
  const auto r = run({"estimate", "--config", (dir / "config.json").string(), "--method", "rf", "--variance",
                      "proposed"});
  CHECK(r.code == 2);
  CHECK(parse_error(r.err)["kind"] == "UnsupportedForProposedVariance");
  CHECK_FALSE(fs::exists(dir / "out" / "coefficients.csv"));
}

TEST_CASE("balance on identical samples") {
  const auto dir = testing::temp_dir("cli_identical");
  const auto pop = synthetic_population(3000, 4);
  auto rng = make_stream(4, 1);
  const auto sample = pop.data.select_rows(draw_srs(pop.size(), 400, rng));
  testing::write_file(dir / "schema.json", schema_to_json(simulation_schema()).dump());
  testing::write_file(dir / "a.csv", table_csv(sample, nullptr));
  nlohmann::json cfg = {{"schema", "schema.json"},
                        {"convenience_csv", "a.csv"},
                        {"representative_csv", "a.csv"},
                        {"covariates", {"age", "sex", "education", "race_ethnicity", "exercise"}},
                        {"balance_methods", {"logistic"}},
                        {"stepwise", false}};
  testing::write_file(dir / "config.json", cfg.dump());
  const auto r = run({"balance", "--config", (dir / "config.json").string(), "--output-dir", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(testing::read_file(dir / "out" / "balance.json"));
  CHECK(doc["meta"]["tool"] == "propweight");
  const auto text = testing::read_file(dir / "out" / "balance_weights.csv");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto fields = split_csv_record(line);
    CHECK(std::abs(std::stod(fields.back()) - 1.0) < 1e-6);
    ++rows;
  }
  CHECK(rows == 400);
  const auto std_diff = testing::read_file(dir / "out" / "balance_std_diff.csv");
  std::istringstream sd(std_diff);
  std::getline(sd, line);
  std::getline(sd, line);
  const auto header = split_csv_record(line);
  while (std::getline(sd, line)) {
    const auto fields = split_csv_record(line);
    for (std::size_t c = 2; c < fields.size(); ++c)
      if (fields[c] != "NA") CHECK(std::abs(std::stod(fields[c])) < 1e-6);
  }
}

TEST_CASE("estimate with every variance") {
  const auto dir = make_inputs("cli_all", {{"bootstrap", {{"n_replicates", 20}, {"strata_variable", "race_ethnicity"}}}});
  const auto r = run({"estimate", "--config", (dir / "config.json").string(), "--variance", "all"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto text = testing::read_file(dir / "out" / "coefficients.csv");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# propweight", 0) == 0);
  std::getline(in, line);
  const auto header = split_csv_record(line);
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  int rows = 0;
  while (std::getline(in, line)) {
    const auto f = split_csv_record(line);
    for (const char* name : {"se_design", "se_proposed", "se_bootstrap"}) {
      REQUIRE(col(name) < f.size());
      CHECK(f[col(name)] != "NA");
      CHECK(std::stod(f[col(name)]) > 0.0);
    }
    ++rows;
  }
  CHECK(rows == 4);
  CHECK(fs::exists(dir / "out" / "weight_model.json"));
  CHECK(fs::exists(dir / "out" / "odds_ratio_table.csv"));
  const auto model = nlohmann::json::parse(testing::read_file(dir / "out" / "weight_model.json"));
  CHECK(model_from_json(model.contains("model") ? model["model"] : model).method == WeightMethod::logistic);
}

TEST_CASE("estimate pools imputed files") {
  auto dir = make_inputs("cli_mi", nlohmann::json::object());
  auto base = testing::read_file(dir / "convenience.csv");
  std::vector<std::string> files;
  for (int k = 1; k <= 5; ++k) {
    std::string copy = base;
    // Perturb one age per file so the imputations differ.
    const auto pos = copy.find('\n') + 1;
    const auto comma = copy.find(',', pos);
    copy.replace(pos, comma - pos, std::to_string(30 + k));
    const auto name = "imp" + std::to_string(k) + ".csv";
    testing::write_file(dir / name, copy);
    files.push_back(name);
  }
  auto cfg = nlohmann::json::parse(testing::read_file(dir / "config.json"));
  cfg["imputed_convenience_csvs"] = files;
  cfg["stepwise"] = false;
  testing::write_file(dir / "config.json", cfg.dump());
  const auto r = run({"estimate", "--config", (dir / "config.json").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "out" / "pooled_coefficients.csv"));
  for (int k = 1; k <= 5; ++k) CHECK(fs::exists(dir / "out" / ("imputation_" + std::to_string(k)) / "coefficients.csv"));
}

TEST_CASE("simulate is byte-identical for a fixed seed") {
  const auto dir = testing::temp_dir("cli_sim");
  const std::vector<std::string> common{"simulate", "--n-sims", "2", "--seed", "7", "--n", "200", "--bootstrap", "2"};
  auto a = common;
  a.insert(a.end(), {"--output-dir", (dir / "a").string(), "--methods", "logistic"});
  auto b = common;
  b.insert(b.end(), {"--output-dir", (dir / "b").string(), "--methods", "logistic"});
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  for (const char* f : {"simulation_report.csv", "simulation_reference.csv", "simulation_balance.csv",
                        "simulation_failures.csv"})
    CHECK(testing::read_file(dir / "a" / f) == testing::read_file(dir / "b" / f));
  auto ja = nlohmann::json::parse(testing::read_file(dir / "a" / "simulation_report.json"));
  auto jb = nlohmann::json::parse(testing::read_file(dir / "b" / "simulation_report.json"));
  ja["config"].erase("output_dir");
  jb["config"].erase("output_dir");
  CHECK(ja == jb);

  const auto text = testing::read_file(dir / "a" / "simulation_report.csv");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::set<std::string> methods;
  while (std::getline(in, line)) methods.insert(split_csv_record(line)[0]);
  CHECK(methods == std::set<std::string>{"unweighted", "true", "logistic"});
}

TEST_CASE("config parsing") {
  const auto cfg = parse_run_config(nlohmann::json{{"weight_method", "eb"}, {"variance", "all"}}, "/data");
  CHECK(cfg.weighting.method == WeightMethod::entropy_balancing);
  CHECK(cfg.variance.design);
  CHECK(cfg.variance.bootstrap);
  CHECK_FALSE(cfg.variance.proposed);
  CHECK(parse_run_config(nlohmann::json{{"schema", "s.json"}}, "/data").schema == fs::path("/data/s.json"));
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"seed", "x"}}), Error);
  CHECK_THROWS_AS(variance_choice_from_string("everything"), Error);
  const auto sim = parse_simulate_config(nlohmann::json{{"methods", {"rf", "cbps"}}, {"true_weight_form", "inverse"}});
  CHECK(sim.simulation.methods == std::vector<WeightMethod>{WeightMethod::random_forest, WeightMethod::cbps});
  CHECK(sim.simulation.true_weight_form == TrueWeightForm::inverse);
  CHECK(config_hash({{"seed", 1}, {"output_dir", "a"}}) == config_hash({{"seed", 1}, {"output_dir", "b"}}));
  CHECK(config_hash({{"seed", 1}}) != config_hash({{"seed", 2}}));
}
