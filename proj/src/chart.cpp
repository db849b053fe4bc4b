#include "prescribe/chart.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prescribe/error.hpp"

namespace prescribe {

std::string_view to_string(ChartSpec::Kind kind) {
  switch (kind) {
    case ChartSpec::Kind::bar: return "bar";
    case ChartSpec::Kind::line: return "line";
    case ChartSpec::Kind::tree: return "tree";
  }
  return "bar";
}

namespace {

json tree_to_json(const TreeNodeSpec& node) {
  json j = {{"label", node.label}};
  if (!node.edge.empty()) j["edge"] = node.edge;
  if (node.leaf_action) j["leaf_action"] = *node.leaf_action;
  json kids = json::array();
  for (const auto& c : node.children) kids.push_back(tree_to_json(c));
  j["children"] = kids;
  return j;
}

TreeNodeSpec tree_from_json(const json& j) {
  TreeNodeSpec node;
  node.label = j.at("label").get<std::string>();
  if (j.contains("edge")) node.edge = j.at("edge").get<std::string>();
  if (j.contains("leaf_action")) node.leaf_action = j.at("leaf_action").get<std::string>();
  for (const auto& c : j.value("children", json::array())) node.children.push_back(tree_from_json(c));
  return node;
}

void validate_tree(const TreeNodeSpec& node) {
  if (node.children.empty() && !node.leaf_action) throw Error(Errc::precondition, "tree leaf without action");
  for (const auto& c : node.children) validate_tree(c);
}

}  // namespace

json to_json(const ChartSpec& chart) {
  json j = {{"kind", std::string(to_string(chart.kind))}, {"title", chart.title}};
  if (chart.kind == ChartSpec::Kind::tree) {
    j["tree"] = chart.tree ? tree_to_json(*chart.tree) : json(nullptr);
    return j;
  }
  j["x_label"] = chart.x_label;
  j["y_label"] = chart.y_label;
  json series = json::array();
  for (const auto& s : chart.series) {
    json xs = json::array();
    for (const auto& x : s.x) xs.push_back(to_json(x));
    json e = {{"label", s.label}, {"x", xs}, {"y", s.y}};
    if (s.y_error) e["y_error"] = *s.y_error;
    series.push_back(e);
  }
  j["series"] = series;
  return j;
}

ChartSpec chart_from_json(const json& j) {
  ChartSpec chart;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "bar") chart.kind = ChartSpec::Kind::bar;
  else if (kind == "line") chart.kind = ChartSpec::Kind::line;
  else if (kind == "tree") chart.kind = ChartSpec::Kind::tree;
  else throw Error(Errc::unsupported_format, "chart kind " + kind);
  chart.title = j.value("title", "");
  if (chart.kind == ChartSpec::Kind::tree) {
    if (j.contains("tree") && !j.at("tree").is_null()) chart.tree = tree_from_json(j.at("tree"));
    return chart;
  }
  chart.x_label = j.value("x_label", "");
  chart.y_label = j.value("y_label", "");
  for (const auto& s : j.value("series", json::array())) {
    Series out;
    out.label = s.value("label", "");
    for (const auto& x : s.at("x")) {
      if (auto v = value_from_json(x)) out.x.push_back(*v);
    }
    out.y = s.at("y").get<std::vector<double>>();
    if (s.contains("y_error")) out.y_error = s.at("y_error").get<std::vector<double>>();
    chart.series.push_back(std::move(out));
  }
  return chart;
}

void validate(const ChartSpec& chart) {
  if (chart.kind == ChartSpec::Kind::tree) {
    if (!chart.tree) throw Error(Errc::precondition, "tree chart without tree");
    validate_tree(*chart.tree);
    return;
  }
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw Error(Errc::precondition, "series x/y length mismatch");
    if (s.y_error && s.y_error->size() != s.y.size())
      throw Error(Errc::precondition, "series y_error length mismatch");
  }
}

std::size_t node_count(const TreeNodeSpec& node) {
  std::size_t n = 1;
  for (const auto& c : node.children) n += node_count(c);
  return n;
}

std::string html_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

namespace {

void render_tree_html(const TreeNodeSpec& node, std::ostringstream& out) {
  out << "<li>";
  if (!node.edge.empty()) out << "<span class=\"edge\">" << html_escape(node.edge) << ":</span> ";
  out << "<span class=\"" << (node.leaf_action ? "leaf" : "node") << "\">" << html_escape(node.label) << "</span>";
  if (!node.children.empty()) {
    out << "<ul>";
    for (const auto& c : node.children) render_tree_html(c, out);
    out << "</ul>";
  }
  out << "</li>";
}

}  // namespace

std::string render_html(const ChartSpec& chart) {
  std::ostringstream out;
  out << "<figure class=\"chart chart-" << to_string(chart.kind) << "\"><figcaption>" << html_escape(chart.title)
      << "</figcaption>";
  if (chart.kind == ChartSpec::Kind::tree) {
    out << "<ul class=\"tree\">";
    if (chart.tree) render_tree_html(*chart.tree, out);
    out << "</ul></figure>";
    return out.str();
  }

  constexpr double width = 480, height = 240, pad = 36;
  double ymax = 0, ymin = 0;
  std::size_t npoints = 0;
  for (const auto& s : chart.series) {
    npoints = std::max(npoints, s.y.size());
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double err = s.y_error ? (*s.y_error)[i] : 0.0;
      if (std::isfinite(s.y[i])) {
        ymax = std::max(ymax, s.y[i] + err);
        ymin = std::min(ymin, s.y[i] - err);
      }
    }
  }
  if (ymax == ymin) ymax = ymin + 1;
  auto sy = [&](double v) { return height - pad - (v - ymin) / (ymax - ymin) * (height - 2 * pad); };
  const double step = npoints ? (width - 2 * pad) / static_cast<double>(npoints) : 0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">";
  out << "<line x1=\"" << pad << "\" y1=\"" << sy(ymin) << "\" x2=\"" << width - pad << "\" y2=\"" << sy(ymin)
      << "\" stroke=\"#444\"/>";
  const char* palette[] = {"#4062bb", "#e07a5f", "#3d9970", "#b10dc9"};
  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const auto& s = chart.series[si];
    const char* color = palette[si % 4];
    if (chart.kind == ChartSpec::Kind::bar) {
      const double bw = step / static_cast<double>(chart.series.size() + 1);
      for (std::size_t i = 0; i < s.y.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        const double x = pad + static_cast<double>(i) * step + static_cast<double>(si) * bw + bw / 2;
        const double top = sy(std::max(s.y[i], 0.0));
        const double bottom = sy(std::min(s.y[i], 0.0));
        out << "<rect x=\"" << x << "\" y=\"" << top << "\" width=\"" << bw << "\" height=\"" << bottom - top
            << "\" fill=\"" << color << "\"><title>" << html_escape(render_literal(s.x[i])) << ": "
            << format_significant(s.y[i]) << "</title></rect>";
      }
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
      for (std::size_t i = 0; i < s.y.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        out << pad + (static_cast<double>(i) + 0.5) * step << "," << sy(s.y[i]) << " ";
      }
      out << "\"/>";
      if (s.y_error) {
        for (std::size_t i = 0; i < s.y.size(); ++i) {
          if (!std::isfinite(s.y[i])) continue;
          const double x = pad + (static_cast<double>(i) + 0.5) * step;
          out << "<line x1=\"" << x << "\" x2=\"" << x << "\" y1=\"" << sy(s.y[i] - (*s.y_error)[i]) << "\" y2=\""
              << sy(s.y[i] + (*s.y_error)[i]) << "\" stroke=\"" << color << "\"/>";
        }
      }
    }
  }
  for (std::size_t i = 0; i < npoints && !chart.series.empty(); ++i) {
    const auto& xs = chart.series.front().x;
    if (i >= xs.size()) break;
    out << "<text font-size=\"10\" x=\"" << pad + (static_cast<double>(i) + 0.5) * step << "\" y=\"" << height - pad / 3
        << "\" text-anchor=\"middle\">" << html_escape(render_literal(xs[i])) << "</text>";
  }
  out << "</svg></figure>";
  return out.str();
}

}  // namespace prescribe
