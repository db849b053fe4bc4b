#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prescribe/value.hpp"

namespace prescribe {

struct Series {
  std::string label;
  std::vector<Value> x;
  std::vector<double> y;
  std::optional<std::vector<double>> y_error;
};

struct TreeNodeSpec {
  std::string label;
  std::string edge;  // "yes" / "no" on children, empty on the root
  std::optional<std::string> leaf_action;
  std::vector<TreeNodeSpec> children;
};

/// Structured figure payload; rendering happens client-side or in the
/// transcript exporter.
struct ChartSpec {
  enum class Kind { bar, line, tree };

  Kind kind = Kind::bar;
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<TreeNodeSpec> tree;
};

std::string_view to_string(ChartSpec::Kind kind);
json to_json(const ChartSpec& chart);
ChartSpec chart_from_json(const json& j);

/// Throws Errc::precondition on x/y length mismatch or leaves without action.
void validate(const ChartSpec& chart);

std::size_t node_count(const TreeNodeSpec& node);

/// Self-contained SVG (bar/line) or nested HTML list (tree).
std::string render_html(const ChartSpec& chart);

std::string html_escape(std::string_view text);

}  // namespace prescribe
