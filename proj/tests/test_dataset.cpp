#include <doctest.h>

#include <sstream>

#include "prescribe/chart.hpp"
#include "prescribe/dataset.hpp"
#include "prescribe/error.hpp"
#include "prescribe/fixtures.hpp"
#include "support.hpp"

using namespace prescribe;
using testing_support::TempDir;

namespace {

json bank_meta_json() {
  return json::parse(R"({
    "title": "Bank Marketing", "path": "data.csv", "action": "CAMPAIGN", "outcome": "CONVERSION",
    "columns": [
      {"name": "age", "dtype": "numeric", "description": "age in years"},
      {"name": "job", "dtype": "categorical", "description": "job type"},
      {"name": "euribor3m", "dtype": "numeric", "description": "euribor 3 month rate", "supported": true},
      {"name": "CAMPAIGN", "dtype": "numeric", "description": "calls made"},
      {"name": "CONVERSION", "dtype": "boolean", "description": "subscribed"}
    ]})");
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::precondition;
}

const char* kEightRows =
    "x,A,Y\n"
    "1.5,0,0\n"
    "2.5,1,1\n"
    "3.5,2,1\n"
    "4.5,0,0\n"
    "5.5,1,0\n"
    "6.5,2,1\n"
    "7.5,0,1\n"
    "8.5,1,0\n";

DatasetMetadata eight_row_meta() {
  auto meta = testing_support::small_meta({{"x", Dtype::numeric}});
  return meta;
}

}  // namespace

TEST_CASE("value parsing follows the locale-free rules") {
  CHECK(parse_number("42") == 42.0);
  CHECK(parse_number("-3.5") == -3.5);
  CHECK_FALSE(parse_number("1,000"));
  CHECK_FALSE(parse_number("abc"));
  CHECK_FALSE(parse_number(""));
  for (const char* t : {"yes", "TRUE", "1", "Yes"}) CHECK(parse_bool(t) == true);
  for (const char* t : {"no", "False", "0"}) CHECK(parse_bool(t) == false);
  CHECK_FALSE(parse_bool("maybe"));
  CHECK(render_literal(Value{4.964}) == "4.964");
  CHECK(render_literal(Value{4.0}) == "4");
  CHECK(render_literal(Value{true}) == "true");
  CHECK(format_percent(0.0839) == "8.39%");
}

TEST_CASE("load_metadata accepts the bank schema and rejects broken ones") {
  TempDir dir("meta");
  write_file(dir / "meta.json", bank_meta_json().dump());
  const auto meta = load_metadata(dir / "meta.json");
  CHECK(meta.action_column == "CAMPAIGN");
  CHECK(meta.outcome_column == "CONVERSION");
  CHECK(meta.covariates() == std::vector<std::string>{"age", "job", "euribor3m"});

  auto j = bank_meta_json();
  j["outcome"] = "CAMPAIGN";
  CHECK(code_of([&] { metadata_from_json(j); }) == Errc::action_equals_outcome);

  j = bank_meta_json();
  j.erase("title");
  CHECK(code_of([&] { metadata_from_json(j); }) == Errc::missing_field);

  j = bank_meta_json();
  j["columns"][0]["dtype"] = "datetime";
  CHECK(code_of([&] { metadata_from_json(j); }) == Errc::unknown_dtype);

  j = bank_meta_json();
  j["columns"][1]["name"] = "age";
  CHECK(code_of([&] { metadata_from_json(j); }) == Errc::duplicate_column);

  CHECK(code_of([&] { load_metadata(dir / "absent.json"); }) == Errc::file_not_found);
}

TEST_CASE("metadata serialisation round-trips") {
  const auto meta = metadata_from_json(bank_meta_json());
  const auto again = metadata_from_json(to_json(meta));
  CHECK(to_json(again) == to_json(meta));
}

TEST_CASE("load_table parses the eight-row fixture") {
  const auto table = parse_table(eight_row_meta(), kEightRows);
  CHECK(table.row_count() == 8);
  CHECK(table.dropped_rows() == 0);
  const auto a = table.numeric("A");
  CHECK(a[2] == 2.0);
}

TEST_CASE("load_table rejects a header without the outcome") {
  CHECK(code_of([&] { parse_table(eight_row_meta(), "x,A\n1,0\n"); }) == Errc::header_mismatch);
}

TEST_CASE("bad covariate cells become missing, bad action rows are dropped") {
  const std::string csv =
      "x,A,Y\n"
      "1.5,0,0\n"
      "oops,1,1\n"
      "NA,2,1\n"
      "4.5,two,0\n"
      "5.5,,1\n"
      "6.5,2,1\n";
  // Independent scan: rows whose action field parses as a number.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::size_t usable = 0, missing_x = 0;
  while (std::getline(in, line)) {
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    const auto action = line.substr(first + 1, second - first - 1);
    if (!parse_number(action)) continue;
    ++usable;
    if (!parse_number(line.substr(0, first))) ++missing_x;
  }
  const auto table = parse_table(eight_row_meta(), csv);
  CHECK(table.row_count() == usable);
  CHECK(table.dropped_rows() == 6 - usable);
  std::size_t missing = 0;
  for (const auto& cell : table.column("x").cells) missing += !cell.has_value();
  CHECK(missing == missing_x);
  CHECK(missing == 2);
}

TEST_CASE("a table without usable rows is an error") {
  CHECK(code_of([&] { parse_table(eight_row_meta(), "x,A,Y\n1,a,b\n"); }) == Errc::empty_table);
}

TEST_CASE("load_table resolves the path and hashes deterministically") {
  TempDir dir("table");
  const auto fixture = bank_fixture(300, 3);
  const auto meta_path = write_fixture(fixture, dir.path());
  const auto meta = load_metadata(meta_path);
  const auto t1 = load_table(meta);
  const auto t2 = load_table(meta);
  CHECK(t1.row_count() == 300);
  CHECK(t1.digest() == t2.digest());
  CHECK(t1.digest() == fixture.table.digest());
  auto missing = meta;
  missing.path = "nope.csv";
  CHECK(code_of([&] { load_table(missing); }) == Errc::file_not_found);
}

TEST_CASE("distinct_values") {
  const auto fixture = bank_fixture();
  const auto loans = distinct_values(fixture.table, "loan");
  CHECK(loans.size() <= 2);
  for (const auto& v : loans) CHECK(std::holds_alternative<bool>(v));

  const auto rates = distinct_values(fixture.table, "euribor3m");
  CHECK(std::find(rates.begin(), rates.end(), Value{4.964}) != rates.end());
  CHECK(rates.front() == Value{4.964});  // first-occurrence order; row 0 holds 4.964
  for (std::size_t i = 0; i < rates.size(); ++i)
    for (std::size_t j = i + 1; j < rates.size(); ++j) CHECK(rates[i] != rates[j]);

  const auto ages = distinct_values(fixture.table, "age", 5);
  CHECK(ages.size() == 5);

  const auto same = parse_table(eight_row_meta(), "x,A,Y\n1,0,0\n1,1,1\n1,2,0\n");
  CHECK(distinct_values(same, "x") == std::vector<Value>{Value{1.0}});
  CHECK(code_of([&] { distinct_values(same, "zzz"); }) == Errc::unknown_column);
}

TEST_CASE("chart specs validate, round-trip and render") {
  ChartSpec bar;
  bar.kind = ChartSpec::Kind::bar;
  bar.title = "T";
  bar.series.push_back({"s", {Value{1.0}, Value{2.0}}, {0.5, 0.7}, std::nullopt});
  CHECK_NOTHROW(validate(bar));
  CHECK(to_json(chart_from_json(to_json(bar))) == to_json(bar));
  CHECK(render_html(bar).find("<svg") != std::string::npos);

  auto broken = bar;
  broken.series[0].y.pop_back();
  CHECK_THROWS_AS(validate(broken), Error);

  ChartSpec tree;
  tree.kind = ChartSpec::Kind::tree;
  tree.tree = TreeNodeSpec{"x <= 1", "", std::nullopt,
                           {TreeNodeSpec{"3", "yes", "3", {}}, TreeNodeSpec{"1", "no", "1", {}}}};
  CHECK_NOTHROW(validate(tree));
  CHECK(node_count(*tree.tree) == 3);
  tree.tree->children[1].leaf_action.reset();
  CHECK_THROWS_AS(validate(tree), Error);
  CHECK(html_escape("<a & b>") == "&lt;a &amp; b&gt;");
}
