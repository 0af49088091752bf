#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace propweight {

enum class VariableKind { continuous, categorical };

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  std::vector<std::string> levels;  // categorical only, in declared order
  std::string reference;            // categorical only; defaults to levels.front()

  static VariableSpec continuous(std::string name);
  static VariableSpec categorical(std::string name, std::vector<std::string> levels,
                                  std::string reference = {});

  bool is_categorical() const { return kind == VariableKind::categorical; }
  int level_index(std::string_view level) const;  // -1 when absent
  int reference_index() const;

  friend bool operator==(const VariableSpec&, const VariableSpec&) = default;
};

using Schema = std::vector<VariableSpec>;

// Throws InvalidArgument on duplicate names, empty/duplicate levels or a
// reference that is not a level.
void validate_schema(const Schema& schema);

Schema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);

// Column-major table. Continuous columns hold doubles; categorical columns
// hold level codes into VariableSpec::levels. No missing values.
class DataTable {
 public:
  struct Column {
    std::vector<double> numeric;
    std::vector<int> codes;

    friend bool operator==(const Column&, const Column&) = default;
  };

  DataTable() = default;
  DataTable(Schema schema, std::vector<Column> columns);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return schema_.size(); }
  const Schema& schema() const { return schema_; }
  const VariableSpec& spec(std::size_t col) const { return schema_[col]; }

  bool has_column(std::string_view name) const;
  std::size_t column_index(std::string_view name) const;  // throws UnknownColumn

  const std::vector<double>& numeric(std::size_t col) const;
  const std::vector<int>& codes(std::size_t col) const;
  const std::vector<double>& numeric(std::string_view name) const { return numeric(column_index(name)); }
  const std::vector<int>& codes(std::string_view name) const { return codes(column_index(name)); }

  // Continuous value, or the level code for categorical columns.
  double value(std::size_t row, std::size_t col) const;

  DataTable select_rows(std::span<const std::size_t> rows) const;
  DataTable select_columns(std::span<const std::string> names) const;

  friend bool operator==(const DataTable&, const DataTable&) = default;

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

// Stack tables with identical schemas.
DataTable concat_rows(const DataTable& top, const DataTable& bottom);

enum class MissingPolicy { reject, drop_rows };

struct CsvOptions {
  MissingPolicy missing_policy = MissingPolicy::reject;
  bool allow_extra_columns = false;  // header columns not in the schema are ignored
};

struct LoadedTable {
  DataTable table;
  std::size_t dropped_count = 0;
};

LoadedTable read_csv(std::istream& in, const Schema& schema, const CsvOptions& options = {});
LoadedTable load_csv(const std::filesystem::path& path, const Schema& schema,
                     const CsvOptions& options = {});

// Split one CSV record (RFC 4180 quoting). Exposed for the writer tests.
std::vector<std::string> split_csv_record(std::string_view line);

struct SurveySample {
  DataTable data;
  std::vector<double> sampling_weight;  // w_S = 1 / pi_S
};

SurveySample make_survey_sample(DataTable data, std::vector<double> sampling_weight);

struct Pseudopopulation {
  DataTable data;
  std::vector<std::size_t> source_row;        // per expanded row
  std::vector<std::size_t> replication_count;  // per source row, w* = ceil(w / min w)
  double inflation_ratio = 1.0;                // sum(w*) / sum(w / min w)
};

Pseudopopulation expand_pseudopopulation(const SurveySample& sample);

struct CombinedSample {
  DataTable data;               // convenience rows first, then representative rows
  std::vector<double> membership;  // C_i in {0, 1}
  std::size_t n_conv = 0;
  std::size_t n_rep = 0;

  std::size_t rows() const { return data.rows(); }
};

// Concatenate on the shared covariate set. The representative table may be a
// Pseudopopulation's data.
CombinedSample combine(const DataTable& convenience, const DataTable& representative,
                       std::span<const std::string> covariates);

}  // namespace propweight
