#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "propweight/bootstrap.hpp"
#include "propweight/data.hpp"
#include "propweight/membership.hpp"
#include "propweight/simulation.hpp"

namespace propweight {

enum class RepresentativeKind { pseudopopulation, survey_with_weights };

struct VarianceChoice {
  bool design = false;
  bool proposed = false;
  bool bootstrap = false;
  bool model = false;
  bool all = false;  // proposed is dropped for weight models without a logistic form
};

// "design", "proposed", "bootstrap", "model" or "all" (design, proposed when
// the weight model allows it, bootstrap). Comma-separated lists combine.
VarianceChoice variance_choice_from_string(std::string_view text);

struct RunConfig {
  std::filesystem::path convenience_csv;
  std::filesystem::path representative_csv;
  std::filesystem::path schema;
  RepresentativeKind representative_kind = RepresentativeKind::pseudopopulation;
  std::string weight_column;  // survey_with_weights only
  WeightingConfig weighting;
  std::vector<WeightMethod> balance_methods;  // cmd_balance; empty: all four
  std::vector<std::string> responses;
  std::vector<std::string> outcome_covariates;
  VarianceChoice variance{true, false, false, false};
  BootstrapConfig bootstrap;
  std::vector<std::filesystem::path> imputed_convenience_csvs;
  MissingPolicy missing = MissingPolicy::reject;
  bool allow_extra_columns = false;  // convenience files only
  std::filesystem::path output_dir = ".";
  std::uint64_t seed = kDefaultSeed;
  int threads = 0;
};

struct SimulateRunConfig {
  SimulationConfig simulation;
  std::size_t population_size = 40000;
  std::filesystem::path population_csv;  // empty: synthetic population
  std::filesystem::path output_dir = ".";
  int threads = 0;
};

// Both parsers reject unknown keys and wrong types with ConfigError.
// Relative paths are resolved against base.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base = {});
SimulateRunConfig parse_simulate_config(const nlohmann::json& doc,
                                        const std::filesystem::path& base = {});

// Hash of the configuration with run-location keys (output_dir, threads)
// removed, so equivalent runs carry the same hash.
std::string config_hash(const nlohmann::json& effective);

// Validation that must happen before any data is read.
void validate_run_config(const RunConfig& config, bool estimate);

void cmd_balance(const RunConfig& config, const nlohmann::json& effective);
void cmd_estimate(const RunConfig& config, const nlohmann::json& effective);
void cmd_simulate(const SimulateRunConfig& config, const nlohmann::json& effective);

// Full command-line entry point. Errors are reported as a single JSON object
// {"kind": ..., "message": ...} on err; returns 0 on success, 2 for
// configuration errors and 1 otherwise.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace propweight
