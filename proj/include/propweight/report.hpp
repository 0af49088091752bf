#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "propweight/outcome.hpp"
#include "propweight/simulation.hpp"

namespace propweight {

inline constexpr std::string_view kVersion = "0.1.0";

struct OutputMeta {
  std::uint64_t seed = 0;
  std::string config_hash;  // 16 hex digits
};

std::string fnv1a_hex(std::string_view text);

// 6 significant digits; "NA" for NaN, "Inf"/"-Inf" for infinities.
std::string format_number(double value);
std::string csv_field(std::string_view text);

std::string header_line(const OutputMeta& meta);

using CsvRow = std::vector<std::string>;

void write_csv(std::ostream& out, const OutputMeta& meta, const CsvRow& header,
               const std::vector<CsvRow>& rows);
void write_csv_file(const std::filesystem::path& path, const OutputMeta& meta, const CsvRow& header,
                    const std::vector<CsvRow>& rows);

// Adds a "meta" member; doubles keep full precision, NaN becomes null.
void write_json_file(const std::filesystem::path& path, const OutputMeta& meta, nlohmann::json body);

nlohmann::json vector_json(const Eigen::VectorXd& v);
nlohmann::json matrix_json(const Eigen::MatrixXd& m);

std::vector<CsvRow> matrix_rows(const Eigen::MatrixXd& m, const std::vector<std::string>& names);

std::vector<CsvRow> simulation_rows(const std::vector<SimulationRow>& rows);
CsvRow simulation_header();
nlohmann::json simulation_json(const SimulationReport& report);

}  // namespace propweight
