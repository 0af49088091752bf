#include "propweight/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "propweight/error.hpp"

namespace propweight {

VariableSpec VariableSpec::continuous(std::string name) {
  return VariableSpec{std::move(name), VariableKind::continuous, {}, {}};
}

VariableSpec VariableSpec::categorical(std::string name, std::vector<std::string> levels,
                                       std::string reference) {
  if (reference.empty() && !levels.empty()) reference = levels.front();
  return VariableSpec{std::move(name), VariableKind::categorical, std::move(levels),
                      std::move(reference)};
}

int VariableSpec::level_index(std::string_view level) const {
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (levels[i] == level) return static_cast<int>(i);
  return -1;
}

int VariableSpec::reference_index() const { return level_index(reference); }

void validate_schema(const Schema& schema) {
  std::set<std::string> names;
  for (const auto& v : schema) {
    if (v.name.empty()) fail(ErrorKind::InvalidArgument, "variable with empty name");
    if (!names.insert(v.name).second)
      fail(ErrorKind::InvalidArgument, "duplicate variable name '" + v.name + "'");
    if (!v.is_categorical()) continue;
    if (v.levels.empty())
      fail(ErrorKind::InvalidArgument, "categorical variable '" + v.name + "' has no levels");
    std::set<std::string> seen;
    for (const auto& level : v.levels) {
      if (level.empty())
        fail(ErrorKind::InvalidArgument, "empty level in variable '" + v.name + "'");
      if (!seen.insert(level).second)
        fail(ErrorKind::InvalidArgument,
             "duplicate level '" + level + "' in variable '" + v.name + "'");
    }
    if (v.reference_index() < 0)
      fail(ErrorKind::InvalidArgument,
           "reference level '" + v.reference + "' is not a level of '" + v.name + "'");
  }
}

Schema schema_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("variables") || !doc["variables"].is_array())
    fail(ErrorKind::ConfigError, "schema must be an object with a 'variables' array");
  for (const auto& [key, _] : doc.items())
    if (key != "variables") fail(ErrorKind::ConfigError, "unknown schema key '" + key + "'");

  Schema schema;
  for (const auto& entry : doc["variables"]) {
    if (!entry.is_object()) fail(ErrorKind::ConfigError, "schema variable must be an object");
    for (const auto& [key, _] : entry.items())
      if (key != "name" && key != "kind" && key != "levels" && key != "reference")
        fail(ErrorKind::ConfigError, "unknown schema variable key '" + key + "'");
    if (!entry.contains("name") || !entry.contains("kind"))
      fail(ErrorKind::ConfigError, "schema variable needs 'name' and 'kind'");
    const auto name = entry["name"].get<std::string>();
    const auto kind = entry["kind"].get<std::string>();
    if (kind == "continuous") {
      if (entry.contains("levels") || entry.contains("reference"))
        fail(ErrorKind::ConfigError, "continuous variable '" + name + "' cannot declare levels");
      schema.push_back(VariableSpec::continuous(name));
    } else if (kind == "categorical") {
      if (!entry.contains("levels"))
        fail(ErrorKind::ConfigError, "categorical variable '" + name + "' needs 'levels'");
      schema.push_back(VariableSpec::categorical(
          name, entry["levels"].get<std::vector<std::string>>(),
          entry.value("reference", std::string{})));
    } else {
      fail(ErrorKind::ConfigError, "unknown variable kind '" + kind + "'");
    }
  }
  try {
    validate_schema(schema);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, e.what());
  }
  return schema;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : schema) {
    nlohmann::json entry{{"name", v.name}};
    if (v.is_categorical()) {
      entry["kind"] = "categorical";
      entry["levels"] = v.levels;
      entry["reference"] = v.reference;
    } else {
      entry["kind"] = "continuous";
    }
    vars.push_back(std::move(entry));
  }
  return {{"variables", vars}};
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open schema file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, "schema file '" + path.string() + "': " + e.what());
  }
  return schema_from_json(doc);
}

DataTable::DataTable(Schema schema, std::vector<Column> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  validate_schema(schema_);
  if (schema_.size() != columns_.size())
    fail(ErrorKind::DimensionMismatch, "schema and column counts differ");
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    const auto& spec = schema_[c];
    const auto& col = columns_[c];
    const std::size_t len = spec.is_categorical() ? col.codes.size() : col.numeric.size();
    if (c == 0) rows_ = len;
    if (len != rows_) fail(ErrorKind::DimensionMismatch, "ragged columns in table");
    if (spec.is_categorical()) {
      const int n_levels = static_cast<int>(spec.levels.size());
      for (int code : col.codes)
        if (code < 0 || code >= n_levels)
          fail(ErrorKind::UnknownLevel, "level code out of range in '" + spec.name + "'");
    } else {
      for (double v : col.numeric)
        if (!std::isfinite(v))
          fail(ErrorKind::ParseError, "non-finite value in '" + spec.name + "'");
    }
  }
}

bool DataTable::has_column(std::string_view name) const {
  return std::any_of(schema_.begin(), schema_.end(),
                     [&](const VariableSpec& v) { return v.name == name; });
}

std::size_t DataTable::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < schema_.size(); ++c)
    if (schema_[c].name == name) return c;
  fail(ErrorKind::UnknownColumn, "unknown column '" + std::string(name) + "'");
}

const std::vector<double>& DataTable::numeric(std::size_t col) const {
  if (schema_.at(col).is_categorical())
    fail(ErrorKind::InvalidArgument, "column '" + schema_[col].name + "' is categorical");
  return columns_[col].numeric;
}

const std::vector<int>& DataTable::codes(std::size_t col) const {
  if (!schema_.at(col).is_categorical())
    fail(ErrorKind::InvalidArgument, "column '" + schema_[col].name + "' is continuous");
  return columns_[col].codes;
}

double DataTable::value(std::size_t row, std::size_t col) const {
  return schema_[col].is_categorical() ? static_cast<double>(columns_[col].codes[row])
                                       : columns_[col].numeric[row];
}

DataTable DataTable::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> out(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (schema_[c].is_categorical()) {
      out[c].codes.reserve(rows.size());
      for (auto r : rows) out[c].codes.push_back(columns_[c].codes.at(r));
    } else {
      out[c].numeric.reserve(rows.size());
      for (auto r : rows) out[c].numeric.push_back(columns_[c].numeric.at(r));
    }
  }
  DataTable t;
  t.schema_ = schema_;
  t.columns_ = std::move(out);
  t.rows_ = rows.size();
  return t;
}

DataTable DataTable::select_columns(std::span<const std::string> names) const {
  Schema schema;
  std::vector<Column> cols;
  for (const auto& name : names) {
    const auto c = column_index(name);
    schema.push_back(schema_[c]);
    cols.push_back(columns_[c]);
  }
  return DataTable(std::move(schema), std::move(cols));
}

DataTable concat_rows(const DataTable& top, const DataTable& bottom) {
  if (top.schema() != bottom.schema())
    fail(ErrorKind::SchemaMismatch, "cannot stack tables with different schemas");
  std::vector<DataTable::Column> cols(top.cols());
  for (std::size_t c = 0; c < top.cols(); ++c) {
    if (top.spec(c).is_categorical()) {
      cols[c].codes = top.codes(c);
      const auto& b = bottom.codes(c);
      cols[c].codes.insert(cols[c].codes.end(), b.begin(), b.end());
    } else {
      cols[c].numeric = top.numeric(c);
      const auto& b = bottom.numeric(c);
      cols[c].numeric.insert(cols[c].numeric.end(), b.begin(), b.end());
    }
  }
  return DataTable(top.schema(), std::move(cols));
}

SurveySample make_survey_sample(DataTable data, std::vector<double> sampling_weight) {
  if (sampling_weight.size() != data.rows())
    fail(ErrorKind::DimensionMismatch, "one sampling weight per row required");
  for (double w : sampling_weight)
    if (!(w > 0.0) || !std::isfinite(w))
      fail(ErrorKind::InvalidArgument, "sampling weights must be positive and finite");
  return SurveySample{std::move(data), std::move(sampling_weight)};
}

Pseudopopulation expand_pseudopopulation(const SurveySample& sample) {
  const auto& w = sample.sampling_weight;
  if (w.empty() || w.size() != sample.data.rows())
    fail(ErrorKind::InvalidArgument, "survey sample needs one weight per row");
  for (double v : w)
    if (!(v > 0.0) || !std::isfinite(v))
      fail(ErrorKind::InvalidArgument, "sampling weights must be positive and finite");

  const double min_w = *std::min_element(w.begin(), w.end());
  Pseudopopulation pp;
  pp.replication_count.resize(w.size());
  double represented = 0.0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double ratio = w[i] / min_w;
    represented += ratio;
    pp.replication_count[i] = static_cast<std::size_t>(std::ceil(ratio));
    total += pp.replication_count[i];
  }
  pp.source_row.reserve(total);
  for (std::size_t i = 0; i < w.size(); ++i)
    pp.source_row.insert(pp.source_row.end(), pp.replication_count[i], i);
  pp.data = sample.data.select_rows(pp.source_row);
  pp.inflation_ratio = static_cast<double>(total) / represented;
  return pp;
}

CombinedSample combine(const DataTable& convenience, const DataTable& representative,
                       std::span<const std::string> covariates) {
  if (covariates.empty()) fail(ErrorKind::InvalidArgument, "no shared covariates given");
  for (const auto& name : covariates) {
    const auto& a = convenience.spec(convenience.column_index(name));
    const auto& b = representative.spec(representative.column_index(name));
    if (a != b)
      fail(ErrorKind::SchemaMismatch, "covariate '" + name + "' differs between samples");
  }
  if (convenience.rows() == 0 || representative.rows() == 0)
    fail(ErrorKind::InvalidArgument, "both samples must be non-empty");

  CombinedSample out;
  out.data = concat_rows(convenience.select_columns(covariates),
                         representative.select_columns(covariates));
  out.n_conv = convenience.rows();
  out.n_rep = representative.rows();
  out.membership.assign(out.n_conv, 1.0);
  out.membership.resize(out.n_conv + out.n_rep, 0.0);
  return out;
}

}  // namespace propweight
