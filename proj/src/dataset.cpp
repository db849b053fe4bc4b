#include "prescribe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "prescribe/error.hpp"

namespace prescribe {

const ColumnSpec* DatasetMetadata::find(std::string_view name) const {
  for (const auto& c : columns)
    if (c.name == name) return &c;
  return nullptr;
}

const ColumnSpec& DatasetMetadata::column(std::string_view name) const {
  if (const auto* c = find(name)) return *c;
  throw Error(Errc::unknown_column, std::string(name));
}

std::vector<std::string> DatasetMetadata::covariates() const {
  std::vector<std::string> out;
  for (const auto& c : columns)
    if (c.supported && c.name != action_column && c.name != outcome_column) out.push_back(c.name);
  return out;
}

std::filesystem::path DatasetMetadata::resolved_path() const {
  std::filesystem::path p(path);
  if (p.is_relative() && !source_dir.empty()) return source_dir / p;
  return p;
}

void validate(const DatasetMetadata& meta) {
  std::set<std::string> seen;
  for (const auto& c : meta.columns) {
    if (c.name.empty()) throw Error(Errc::missing_field, "column name");
    if (c.description.empty()) throw Error(Errc::missing_field, "description of column " + c.name);
    if (!seen.insert(c.name).second) throw Error(Errc::duplicate_column, c.name);
  }
  if (meta.action_column == meta.outcome_column)
    throw Error(Errc::action_equals_outcome, meta.action_column);
  if (!meta.find(meta.action_column)) throw Error(Errc::unknown_column, "action " + meta.action_column);
  const auto* outcome = meta.find(meta.outcome_column);
  if (!outcome) throw Error(Errc::unknown_column, "outcome " + meta.outcome_column);
  if (outcome->dtype == Dtype::categorical)
    throw Error(Errc::invalid_metadata, "outcome must be numeric or boolean");
}

namespace {

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(Errc::missing_field, key);
  return j.at(key);
}

std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw Error(Errc::invalid_metadata, std::string(key) + " must be a string");
  return v.get<std::string>();
}

}  // namespace

DatasetMetadata metadata_from_json(const json& j) {
  DatasetMetadata meta;
  meta.title = require_string(j, "title");
  meta.path = require_string(j, "path");
  meta.action_column = require_string(j, "action");
  meta.outcome_column = require_string(j, "outcome");
  const auto& cols = require(j, "columns");
  if (!cols.is_array()) throw Error(Errc::invalid_metadata, "columns must be an array");
  for (const auto& c : cols) {
    ColumnSpec spec;
    spec.name = require_string(c, "name");
    const auto dtype_text = require_string(c, "dtype");
    const auto dtype = parse_dtype(dtype_text);
    if (!dtype) throw Error(Errc::unknown_dtype, spec.name + ": " + dtype_text);
    spec.dtype = *dtype;
    spec.description = require_string(c, "description");
    if (c.contains("supported")) spec.supported = c.at("supported").get<bool>();
    meta.columns.push_back(std::move(spec));
  }
  if (j.contains("action_costs")) {
    for (const auto& [level, cost] : j.at("action_costs").items()) meta.action_costs[level] = cost.get<double>();
  }
  validate(meta);
  return meta;
}

json to_json(const DatasetMetadata& meta) {
  json cols = json::array();
  for (const auto& c : meta.columns) {
    cols.push_back({{"name", c.name},
                    {"dtype", std::string(to_string(c.dtype))},
                    {"description", c.description},
                    {"supported", c.supported}});
  }
  json j = {{"title", meta.title},
            {"path", meta.path},
            {"action", meta.action_column},
            {"outcome", meta.outcome_column},
            {"columns", cols}};
  if (!meta.action_costs.empty()) j["action_costs"] = meta.action_costs;
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(Errc::io_error, "write failed " + path.string());
}

DatasetMetadata load_metadata(const std::filesystem::path& path) {
  const auto text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_metadata, e.what());
  }
  auto meta = metadata_from_json(j);
  meta.source_dir = path.parent_path();
  return meta;
}

DataTable::DataTable(std::vector<Column> columns, std::size_t dropped_rows)
    : columns_(std::move(columns)), dropped_(dropped_rows) {
  rows_ = columns_.empty() ? 0 : columns_.front().cells.size();
  for (const auto& c : columns_) {
    if (c.cells.size() != rows_) throw Error(Errc::precondition, "column length mismatch: " + c.spec.name);
  }
}

bool DataTable::has_column(std::string_view name) const {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.spec.name == name; });
}

const DataTable::Column& DataTable::column(std::string_view name) const {
  for (const auto& c : columns_)
    if (c.spec.name == name) return c;
  throw Error(Errc::unknown_column, std::string(name));
}

std::vector<double> DataTable::numeric(std::string_view name) const {
  const auto& col = column(name);
  std::vector<double> out(rows_, std::nan(""));
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto& cell = col.cells[r];
    if (!cell) continue;
    if (const auto* d = std::get_if<double>(&*cell)) out[r] = *d;
    else if (const auto* b = std::get_if<bool>(&*cell)) out[r] = *b ? 1.0 : 0.0;
  }
  return out;
}

DataTable DataTable::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) {
    Column out{c.spec, {}};
    out.cells.reserve(rows.size());
    for (auto r : rows) out.cells.push_back(c.cells.at(r));
    cols.push_back(std::move(out));
  }
  return DataTable(std::move(cols), 0);
}

std::uint64_t DataTable::digest() const {
  std::uint64_t h = fnv1a("table");
  for (const auto& c : columns_) {
    h = fnv1a(c.spec.name, h);
    h = fnv1a(to_string(c.spec.dtype), h);
    for (const auto& cell : c.cells) {
      h = fnv1a(cell ? render_literal(*cell) : std::string("\x01NA"), h);
      h = fnv1a("\x1f", h);
    }
  }
  return h;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // UTF-8 BOM
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else if (c == '\n') {
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

namespace {

bool is_missing_token(std::string_view raw) {
  const auto t = trim(raw);
  return t.empty() || t == "NA";
}

}  // namespace

DataTable parse_table(const DatasetMetadata& meta, std::string_view csv_text) {
  auto rows = parse_csv(csv_text);
  if (rows.empty()) throw Error(Errc::header_mismatch, "missing header row");
  const auto& header = rows.front();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(std::string(trim(header[i])), i);

  std::vector<std::size_t> source;
  for (const auto& c : meta.columns) {
    auto it = index.find(c.name);
    if (it == index.end()) throw Error(Errc::header_mismatch, "CSV lacks column " + c.name);
    source.push_back(it->second);
  }

  std::vector<DataTable::Column> cols;
  for (const auto& c : meta.columns) cols.push_back({c, {}});

  std::size_t dropped = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& raw = rows[r];
    std::vector<Cell> parsed(meta.columns.size());
    bool keep = true;
    for (std::size_t k = 0; k < meta.columns.size(); ++k) {
      const auto& spec = meta.columns[k];
      const std::string_view text = source[k] < raw.size() ? std::string_view(raw[source[k]]) : std::string_view();
      if (!is_missing_token(text)) parsed[k] = parse_value(text, spec.dtype);
      const bool required = spec.name == meta.action_column || spec.name == meta.outcome_column;
      if (required && !parsed[k]) keep = false;
    }
    if (!keep) {
      ++dropped;
      continue;
    }
    for (std::size_t k = 0; k < cols.size(); ++k) cols[k].cells.push_back(std::move(parsed[k]));
  }
  DataTable table(std::move(cols), dropped);
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no usable rows");
  return table;
}

DataTable load_table(const DatasetMetadata& meta, const std::filesystem::path& csv_path) {
  if (!std::filesystem::exists(csv_path)) throw Error(Errc::file_not_found, csv_path.string());
  return parse_table(meta, read_file(csv_path));
}

DataTable load_table(const DatasetMetadata& meta) { return load_table(meta, meta.resolved_path()); }

std::vector<Value> distinct_values(const DataTable& table, std::string_view column, std::size_t limit) {
  const auto& col = table.column(column);
  std::vector<Value> out;
  std::set<std::string> seen;
  for (const auto& cell : col.cells) {
    if (out.size() >= limit) break;
    if (!cell) continue;
    if (seen.insert(render_literal(*cell)).second) out.push_back(*cell);
  }
  return out;
}

}  // namespace prescribe
