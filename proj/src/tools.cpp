#include "prescribe/tools.hpp"

#include <cmath>

#include "prescribe/error.hpp"

namespace prescribe {

const std::vector<ToolSpec>& registry() {
  static const std::vector<ToolSpec> tools = [] {
    std::vector<ToolSpec> t;
    t.push_back({"show_current_policy",
                 {"show_base_policy"},
                 {},
                 "Shows what the current policy is and any relevant KPIs.",
                 {"scalar", "chart"}});
    t.push_back({"select_features",
                 {},
                 {},
                 "Covariate selection tool that selects most the important features that affect the outcome.",
                 {"text", "chart"}});
    t.push_back({"show_causal_effect",
                 {},
                 {ParamSpec{"show_error", Dtype::boolean, false, Value{false}, false, false}},
                 "Plots how the action affects the outcome in the average case.",
                 {"chart"}});
    t.push_back({"counterfactual",
                 {},
                 {ParamSpec{"conditions", Dtype::categorical, true, std::nullopt, false, true}},
                 "Plots how the action affects the outcome under the provided conditions.",
                 {"chart"}});
    t.push_back({"run_optimize",
                 {"run_opt"},
                 {ParamSpec{"num_rules", Dtype::numeric, true, std::nullopt, true, false},
                  ParamSpec{"average_budget", Dtype::numeric, true, std::nullopt, false, false}},
                 "Produces the optimized KPI and policy through a prescriptive tree constrained by an average "
                 "budget per row.",
                 {"scalar", "chart", "tree"}});
    return t;
  }();
  return tools;
}

const ToolSpec* lookup(std::string_view name) {
  for (const auto& tool : registry()) {
    if (tool.name == name) return &tool;
    for (const auto& alias : tool.aliases)
      if (alias == name) return &tool;
  }
  return nullptr;
}

std::vector<ParamSpec> system_params() {
  std::vector<ParamSpec> out;
  for (const auto& tool : registry())
    for (const auto& p : tool.params)
      if (!p.conditions) out.push_back(p);
  return out;
}

const Scalar* ToolResult::scalar(std::string_view name) const {
  for (const auto& s : scalars)
    if (s.name == name) return &s;
  return nullptr;
}

bool outcome_is_rate(const DatasetMetadata& meta) {
  const auto* spec = meta.find(meta.outcome_column);
  return spec && spec->dtype == Dtype::boolean;
}

std::string render_scalar(const Scalar& scalar, const DatasetMetadata& meta) {
  if (const auto* d = std::get_if<double>(&scalar.value)) {
    switch (scalar.unit) {
      case Unit::outcome:
        return outcome_is_rate(meta) ? format_percent(*d) : format_significant(*d);
      case Unit::count:
        return render_number(std::round(*d));
      case Unit::action:
      case Unit::plain:
        return format_significant(*d);
    }
  }
  return render_literal(scalar.value);
}

std::string render_scalars(const ToolResult& result, const DatasetMetadata& meta) {
  std::string out;
  for (const auto& s : result.scalars) {
    if (!out.empty()) out += ", ";
    out += s.name + " = " + render_scalar(s, meta);
  }
  return out;
}

std::vector<std::string> missing_params(const ToolSpec& tool, const ValueMap& params, const ValueMap& conditions) {
  std::vector<std::string> out;
  for (const auto& p : tool.params) {
    if (!p.required) continue;
    const bool present = p.conditions ? !conditions.empty() : params.contains(p.name);
    if (!present) out.push_back(p.name);
  }
  return out;
}

namespace {

ValueMap resolve_params(const ToolSpec& tool, const ValueMap& params) {
  ValueMap out;
  for (const auto& p : tool.params) {
    if (p.conditions) continue;
    auto it = params.find(p.name);
    if (it == params.end()) {
      if (p.default_value) out[p.name] = *p.default_value;
      continue;
    }
    auto typed = coerce(it->second, p.dtype);
    if (!typed) throw Error(Errc::bad_param_type, p.name);
    if (p.integer) {
      const double d = std::get<double>(*typed);
      if (d != std::floor(d) || d < 1) throw Error(Errc::bad_param_type, p.name);
    }
    out[p.name] = *typed;
  }
  return out;
}

DataTable restrict(const DataTable& table, const ValueMap& conditions) {
  if (conditions.empty()) return table;
  const auto rows = matching_rows(table, conditions);
  if (rows.size() < kMinSupportError)
    throw Error(Errc::no_matching_rows, std::to_string(rows.size()) + " rows satisfy the conditions");
  return table.select_rows(rows);
}

void add_effect_scalars(ToolResult& r, const EffectEstimate& est) {
  if (auto best = est.best_level()) {
    r.scalars.push_back({"best_action", Value{est.action_labels[*best]}, Unit::action});
    r.scalars.push_back({"best_expected_outcome", Value{est.estimates[*best]}, Unit::outcome});
  }
  r.scalars.push_back({"baseline", Value{est.baseline}, Unit::outcome});
}

ToolResult run(const ToolSpec& tool, const ValueMap& params, const ValueMap& conditions, const ToolContext& ctx) {
  const auto& table = *ctx.table;
  const auto& meta = *ctx.meta;
  ToolResult r;
  r.tool = tool.name;
  r.params_used = params;

  if (tool.name == "show_current_policy") {
    const auto snap = current_policy(table, meta);
    r.scalars.push_back({"kpi", Value{snap.kpi}, Unit::outcome});
    r.scalars.push_back({"rows", Value{static_cast<double>(snap.n)}, Unit::count});
    r.charts.push_back(policy_chart(snap, meta, "Current " + meta.action_column + " policy"));
    json dist = json::object();
    for (const auto& [label, frac] : snap.action_distribution) dist[label] = frac;
    r.details = {{"action_distribution", dist}, {"kpi", snap.kpi}, {"n", snap.n}};
  } else if (tool.name == "select_features") {
    const auto report = select_features(table, meta, 5, ctx.seed);
    r.scalars.push_back({"num_selected", Value{static_cast<double>(report.selected.size())}, Unit::count});
    std::string names;
    for (const auto& s : report.selected) names += (names.empty() ? "" : ", ") + s;
    r.scalars.push_back({"selected", Value{names}, Unit::plain});
    r.charts.push_back(cv_curve_chart(report));
    r.charts.push_back(feature_score_chart(report));
    r.details = to_json(report);
  } else if (tool.name == "show_causal_effect") {
    EffectOptions opts;
    opts.show_error = std::get<bool>(params.at("show_error"));
    opts.seed = ctx.seed;
    const auto est = effect_curve(table, meta, ctx.features, opts);
    add_effect_scalars(r, est);
    r.warnings = est.warnings;
    r.charts.push_back(effect_chart(est, meta));
    r.details = to_json(est);
  } else if (tool.name == "counterfactual") {
    EffectOptions opts;
    opts.seed = ctx.seed;
    const auto est = conditional_effect(table, meta, conditions, ctx.features, opts);
    r.conditions = conditions;
    add_effect_scalars(r, est);
    r.scalars.push_back({"matching_rows", Value{static_cast<double>(est.rows)}, Unit::count});
    r.warnings = est.warnings;
    r.charts.push_back(effect_chart(est, meta));
    r.details = to_json(est);
  } else if (tool.name == "run_optimize") {
    const auto subset = restrict(table, conditions);
    r.conditions = conditions;
    const auto num_rules = static_cast<int>(std::get<double>(params.at("num_rules")));
    const double budget = std::get<double>(params.at("average_budget"));
    const auto result = learn_policy(subset, meta, ctx.features, num_rules, budget, ctx.seed);
    r.scalars.push_back({"projected_kpi", Value{result.projected_kpi}, Unit::outcome});
    r.scalars.push_back({"baseline_kpi", Value{result.baseline_kpi}, Unit::outcome});
    r.scalars.push_back({"budget_used", Value{result.budget_used}, Unit::action});
    r.scalars.push_back({"num_leaves", Value{static_cast<double>(result.tree.num_rules())}, Unit::count});
    r.charts.push_back(distribution_chart(result, meta));
    r.charts.push_back(render_tree(result.tree));
    r.details = to_json(result);
  }
  r.text_summary = tool.name + ": " + render_scalars(r, meta);
  return r;
}

}  // namespace

ToolResult execute(const ToolSpec& tool, const ValueMap& params, const ValueMap& conditions, const ToolContext& ctx) {
  if (!ctx.table || !ctx.meta) throw Error(Errc::precondition, "tool context has no dataset");
  auto missing = missing_params(tool, params, conditions);
  if (!missing.empty()) throw MissingParamError(std::move(missing));
  const auto resolved = resolve_params(tool, params);
  try {
    return run(tool, resolved, conditions, ctx);
  } catch (const MissingParamError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), tool.name + ": " + e.what());
  }
}

json to_json(const ToolSpec& tool) {
  json params = json::array();
  for (const auto& p : tool.params) {
    json j = {{"name", p.name}, {"dtype", p.conditions ? "map" : std::string(to_string(p.dtype))}, {"required", p.required}};
    if (p.default_value) j["default"] = to_json(*p.default_value);
    params.push_back(j);
  }
  return {{"name", tool.name},
          {"aliases", tool.aliases},
          {"params", params},
          {"description", tool.description},
          {"returns", tool.returns}};
}

json to_json(const ToolResult& result, const DatasetMetadata& meta) {
  json scalars = json::object();
  json rendered = json::object();
  for (const auto& s : result.scalars) {
    scalars[s.name] = to_json(s.value);
    rendered[s.name] = render_scalar(s, meta);
  }
  json charts = json::array();
  for (const auto& c : result.charts) charts.push_back(to_json(c));
  return {{"tool", result.tool},
          {"scalars", scalars},
          {"rendered", rendered},
          {"text_summary", result.text_summary},
          {"charts", charts},
          {"params_used", to_json(result.params_used)},
          {"conditions", to_json(result.conditions)},
          {"warnings", result.warnings},
          {"details", result.details}};
}

}  // namespace prescribe
