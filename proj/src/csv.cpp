#include <charconv>
#include <fstream>
#include <istream>
#include <map>

#include "propweight/data.hpp"
#include "propweight/error.hpp"

namespace propweight {

std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (quoted) fail(ErrorKind::ParseError, "unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

namespace {

// Reads one logical record; quoted fields may span physical lines.
bool next_record(std::istream& in, std::string& record) {
  record.clear();
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (any) record.push_back('\n');
    record += line;
    any = true;
    std::size_t quotes = 0;
    for (char ch : record) quotes += (ch == '"');
    if (quotes % 2 == 0) return true;
  }
  return any;
}

double parse_number(const std::string& text, const std::string& column, std::size_t line) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  if (begin < end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value))
    fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": cannot parse '" + text +
                                    "' as a number in column '" + column + "'");
  return value;
}

}  // namespace

LoadedTable read_csv(std::istream& in, const Schema& schema, const CsvOptions& options) {
  validate_schema(schema);
  std::string record;
  if (!next_record(in, record)) fail(ErrorKind::ParseError, "missing header row");
  if (record.size() >= 3 && static_cast<unsigned char>(record[0]) == 0xEF &&
      static_cast<unsigned char>(record[1]) == 0xBB && static_cast<unsigned char>(record[2]) == 0xBF)
    record.erase(0, 3);

  const auto header = split_csv_record(record);
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const bool known = std::any_of(schema.begin(), schema.end(),
                                   [&](const VariableSpec& v) { return v.name == header[i]; });
    if (!known) {
      if (options.allow_extra_columns) continue;
      fail(ErrorKind::UnknownColumn, "column '" + header[i] + "' is not in the schema");
    }
    if (!position.emplace(header[i], i).second)
      fail(ErrorKind::ParseError, "duplicate header column '" + header[i] + "'");
  }
  for (const auto& v : schema)
    if (!position.count(v.name))
      fail(ErrorKind::UnknownColumn, "schema column '" + v.name + "' missing from header");

  std::vector<DataTable::Column> columns(schema.size());
  std::size_t dropped = 0;
  std::size_t line_no = 1;
  while (next_record(in, record)) {
    ++line_no;
    if (record.empty()) continue;
    const auto fields = split_csv_record(record);
    if (fields.size() != header.size())
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
    bool missing = false;
    for (const auto& v : schema)
      if (fields[position[v.name]].empty()) missing = true;
    if (missing) {
      if (options.missing_policy == MissingPolicy::drop_rows) {
        ++dropped;
        continue;
      }
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": missing value");
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& v = schema[c];
      const auto& text = fields[position[v.name]];
      if (v.is_categorical()) {
        const int code = v.level_index(text);
        if (code < 0)
          fail(ErrorKind::UnknownLevel, "line " + std::to_string(line_no) + ": level '" + text +
                                            "' is not declared for '" + v.name + "'");
        columns[c].codes.push_back(code);
      } else {
        columns[c].numeric.push_back(parse_number(text, v.name, line_no));
      }
    }
  }
  DataTable table(schema, std::move(columns));
  if (table.rows() == 0) fail(ErrorKind::EmptyResult, "no complete rows in CSV input");
  return LoadedTable{std::move(table), dropped};
}

LoadedTable load_csv(const std::filesystem::path& path, const Schema& schema,
                     const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return read_csv(in, schema, options);
}

}  // namespace propweight
