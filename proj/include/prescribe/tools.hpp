#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prescribe/causal.hpp"
#include "prescribe/chart.hpp"
#include "prescribe/dataset.hpp"
#include "prescribe/policy.hpp"

namespace prescribe {

struct ParamSpec {
  std::string name;
  Dtype dtype = Dtype::numeric;
  bool required = false;
  std::optional<Value> default_value;
  bool integer = false;
  /// Filled from the session's column conditions rather than a single value.
  bool conditions = false;
};

struct ToolSpec {
  std::string name;
  std::vector<std::string> aliases;
  std::vector<ParamSpec> params;
  std::string description;
  std::vector<std::string> returns;
};

/// The five prescriptive tools, in a fixed order.
const std::vector<ToolSpec>& registry();
/// Canonical name or alias; nullptr when unknown.
const ToolSpec* lookup(std::string_view name);

/// Names of the parameters every tool may draw from memory (non-column).
std::vector<ParamSpec> system_params();

enum class Unit { outcome, action, count, plain };

struct Scalar {
  std::string name;
  Value value;
  Unit unit = Unit::plain;
};

struct ToolContext {
  const DataTable* table = nullptr;
  const DatasetMetadata* meta = nullptr;
  std::vector<std::string> features;
  std::uint64_t seed = 0;
};

struct ToolResult {
  std::string tool;
  std::vector<Scalar> scalars;
  std::string text_summary;
  std::vector<ChartSpec> charts;
  ValueMap params_used;
  ValueMap conditions;
  std::vector<std::string> warnings;
  json details;

  const Scalar* scalar(std::string_view name) const;
};

/// True when the outcome is a boolean column, so its means read as rates.
bool outcome_is_rate(const DatasetMetadata& meta);

/// Percent with two decimals for rates, four significant digits otherwise.
std::string render_scalar(const Scalar& scalar, const DatasetMetadata& meta);
/// "name = value" pairs joined by ", ".
std::string render_scalars(const ToolResult& result, const DatasetMetadata& meta);

/// Required params absent from `params` (conditions counted from
/// `conditions`), in ToolSpec order.
std::vector<std::string> missing_params(const ToolSpec& tool, const ValueMap& params, const ValueMap& conditions);

/// Runs `tool`. Throws MissingParamError, Error(bad_param_type) or the
/// engine's error with the tool name prefixed.
ToolResult execute(const ToolSpec& tool, const ValueMap& params, const ValueMap& conditions, const ToolContext& ctx);

json to_json(const ToolSpec& tool);
json to_json(const ToolResult& result, const DatasetMetadata& meta);

}  // namespace prescribe
