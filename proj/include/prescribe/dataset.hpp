#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prescribe/value.hpp"

namespace prescribe {

struct ColumnSpec {
  std::string name;
  Dtype dtype = Dtype::numeric;
  std::string description;
  bool supported = true;  // participates in NLU and analysis
};

/// Domain description of a dataset: which column is the action, which is the
/// outcome, and what every other column means.
struct DatasetMetadata {
  std::string title;
  std::string path;
  std::string action_column;
  std::string outcome_column;
  std::vector<ColumnSpec> columns;
  /// Optional per-level action costs; empty means cost = numeric action value.
  std::map<std::string, double> action_costs;

  /// Directory the metadata was loaded from; relative `path` resolves here.
  /// Not serialized.
  std::filesystem::path source_dir;

  const ColumnSpec* find(std::string_view name) const;
  /// Throws Errc::unknown_column.
  const ColumnSpec& column(std::string_view name) const;
  /// Supported columns other than action and outcome, in declaration order.
  std::vector<std::string> covariates() const;
  std::filesystem::path resolved_path() const;
};

void validate(const DatasetMetadata& meta);
DatasetMetadata metadata_from_json(const json& j);
json to_json(const DatasetMetadata& meta);
DatasetMetadata load_metadata(const std::filesystem::path& path);

/// Column-major typed table. Immutable once built.
class DataTable {
 public:
  struct Column {
    ColumnSpec spec;
    std::vector<Cell> cells;
  };

  DataTable() = default;
  /// All columns must have equal length.
  DataTable(std::vector<Column> columns, std::size_t dropped_rows = 0);

  std::size_t row_count() const noexcept { return rows_; }
  std::size_t dropped_rows() const noexcept { return dropped_; }
  std::span<const Column> columns() const noexcept { return columns_; }

  bool has_column(std::string_view name) const;
  /// Throws Errc::unknown_column.
  const Column& column(std::string_view name) const;

  /// Numeric view of a column: numbers as-is, booleans as 0/1, NaN for
  /// missing or categorical cells.
  std::vector<double> numeric(std::string_view name) const;

  DataTable select_rows(std::span<const std::size_t> rows) const;
  std::uint64_t digest() const;

 private:
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
  std::size_t dropped_ = 0;
};

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

DataTable parse_table(const DatasetMetadata& meta, std::string_view csv_text);
DataTable load_table(const DatasetMetadata& meta);
DataTable load_table(const DatasetMetadata& meta, const std::filesystem::path& csv_path);

/// Distinct non-missing values in first-occurrence order, at most `limit`.
std::vector<Value> distinct_values(const DataTable& table, std::string_view column, std::size_t limit = 25);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace prescribe
