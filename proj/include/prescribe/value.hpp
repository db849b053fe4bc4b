#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace prescribe {

using json = nlohmann::json;

enum class Dtype { numeric, categorical, boolean };

std::string_view to_string(Dtype dtype);
std::optional<Dtype> parse_dtype(std::string_view text);

/// A typed scalar: cell contents, condition values and tool parameters all
/// share this representation.
using Value = std::variant<double, std::string, bool>;

/// A table cell; nullopt is the missing marker.
using Cell = std::optional<Value>;

using ValueMap = std::map<std::string, Value>;

bool matches_dtype(const Value& value, Dtype dtype);

/// Canonical literal used in prompts, training files and exact-match
/// comparisons: shortest round-trip decimal for numbers, "true"/"false".
std::string render_literal(const Value& value);
std::string render_number(double value);

/// Integer or decimal literal (optional sign). No exponents, no thousands
/// separators, finite only.
std::optional<double> parse_number(std::string_view text);

/// yes/no/true/false/0/1, case-insensitive.
std::optional<bool> parse_bool(std::string_view text);

/// Parses `text` according to `dtype`. Categorical accepts any non-empty text.
std::optional<Value> parse_value(std::string_view text, Dtype dtype);

/// Coerces a value into `dtype` (e.g. "4" -> 4.0 for numeric); nullopt when
/// the value cannot represent that dtype.
std::optional<Value> coerce(const Value& value, Dtype dtype);

json to_json(const Value& value);
std::optional<Value> value_from_json(const json& j);

json to_json(const ValueMap& values);

// Small string helpers shared across modules.
std::string to_lower(std::string_view text);
std::string_view trim(std::string_view text);
bool iequals(std::string_view a, std::string_view b);

/// Four significant digits, trailing zeros removed ("3.5", "3.413").
std::string format_significant(double value, int digits = 4);
/// 0.0839 -> "8.39%".
std::string format_percent(double fraction);

/// FNV-1a, 64 bit. Used for stable content digests.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t digest);

}  // namespace prescribe
