#include "propweight/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "propweight/error.hpp"

namespace propweight {

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string header_line(const OutputMeta& meta) {
  return "# propweight " + std::string(kVersion) + " seed=" + std::to_string(meta.seed) +
         " config_hash=" + meta.config_hash;
}

void write_csv(std::ostream& out, const OutputMeta& meta, const CsvRow& header,
               const std::vector<CsvRow>& rows) {
  out << header_line(meta) << '\n';
  auto line = [&](const CsvRow& r) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << csv_field(r[k]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) fail(ErrorKind::DimensionMismatch, "CSV row width differs from header");
    line(r);
  }
}

void write_csv_file(const std::filesystem::path& path, const OutputMeta& meta, const CsvRow& header,
                    const std::vector<CsvRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  write_csv(out, meta, header, rows);
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

void write_json_file(const std::filesystem::path& path, const OutputMeta& meta, nlohmann::json body) {
  body["meta"] = {{"tool", "propweight"}, {"version", kVersion}, {"seed", meta.seed},
                  {"config_hash", meta.config_hash}};
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << body.dump(2) << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  auto j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vector_json(m.row(r).transpose()));
  return j;
}

std::vector<CsvRow> matrix_rows(const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
  std::vector<CsvRow> rows;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    CsvRow row{names[static_cast<std::size_t>(r)]};
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_number(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

CsvRow simulation_header() { return {"method", "coefficient", "metric", "value"}; }

std::vector<CsvRow> simulation_rows(const std::vector<SimulationRow>& rows) {
  std::vector<CsvRow> out;
  for (const auto& r : rows) {
    auto add = [&](const char* metric, std::string value) {
      out.push_back({r.method, r.coefficient, metric, std::move(value)});
    };
    add("mean_beta", format_number(r.mean_beta));
    add("empirical_se", format_number(r.empirical_se));
    add("mc_se", format_number(r.mc_se));
    add("diff_mc_se", format_number(r.diff_mc_se));
    add("mean_analytic_se", format_number(r.mean_analytic_se));
    add("analytic_kind", r.analytic_kind);
    add("mean_design_se", format_number(r.mean_design_se));
    add("mean_bootstrap_se", format_number(r.mean_bootstrap_se));
    add("percent_bias", format_number(r.percent_bias));
    add("design_effect", format_number(r.design_effect));
    add("n_success", std::to_string(r.n_success));
    add("n_failed", std::to_string(r.n_failed));
    add("bootstrap_sims", std::to_string(r.bootstrap_sims));
    add("bootstrap_failed_replicates", std::to_string(r.bootstrap_failed_replicates));
  }
  return out;
}

namespace {

nlohmann::json row_json(const SimulationRow& r) {
  return {{"method", r.method},
          {"coefficient", r.coefficient},
          {"mean_beta", r.mean_beta},
          {"empirical_se", r.empirical_se},
          {"mc_se", r.mc_se},
          {"diff_mc_se", r.diff_mc_se},
          {"mean_analytic_se", r.mean_analytic_se},
          {"analytic_kind", r.analytic_kind},
          {"mean_design_se", r.mean_design_se},
          {"mean_bootstrap_se", r.mean_bootstrap_se},
          {"percent_bias", r.percent_bias},
          {"design_effect", r.design_effect},
          {"n_success", r.n_success},
          {"n_failed", r.n_failed},
          {"bootstrap_sims", r.bootstrap_sims},
          {"bootstrap_failed_replicates", r.bootstrap_failed_replicates}};
}

}  // namespace

nlohmann::json simulation_json(const SimulationReport& report) {
  nlohmann::json j;
  j["coefficients"] = report.coefficients;
  j["reference"] = nlohmann::json::array();
  for (const auto& r : report.reference) j["reference"].push_back(row_json(r));
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) j["rows"].push_back(row_json(r));
  j["balance"] = nlohmann::json::array();
  for (const auto& b : report.balance)
    j["balance"].push_back({{"method", b.method},
                            {"covariate", b.entry.covariate},
                            {"level", b.entry.level},
                            {"standardized_difference", b.entry.difference}});
  j["failures"] = nlohmann::json::array();
  for (const auto& f : report.failures)
    j["failures"].push_back({{"sim", f.sim}, {"method", f.method}, {"kind", f.kind}, {"message", f.message}});
  return j;
}

}  // namespace propweight
