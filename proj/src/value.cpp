#include "prescribe/value.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "prescribe/error.hpp"

namespace prescribe {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::missing_field: return "MissingField";
    case Errc::unknown_dtype: return "UnknownDtype";
    case Errc::action_equals_outcome: return "ActionEqualsOutcome";
    case Errc::duplicate_column: return "DuplicateColumn";
    case Errc::invalid_metadata: return "InvalidMetadata";
    case Errc::unknown_column: return "UnknownColumn";
    case Errc::file_not_found: return "FileNotFound";
    case Errc::header_mismatch: return "HeaderMismatch";
    case Errc::empty_table: return "EmptyTable";
    case Errc::too_few_rows: return "TooFewRows";
    case Errc::no_covariates: return "NoCovariates";
    case Errc::no_matching_rows: return "NoMatchingRows";
    case Errc::infeasible_budget: return "InfeasibleBudget";
    case Errc::non_numeric_action_without_costs: return "NonNumericActionWithoutCosts";
    case Errc::too_few_rules: return "TooFewRules";
    case Errc::missing_param: return "MissingParam";
    case Errc::bad_param_type: return "BadParamType";
    case Errc::unknown_tool: return "UnknownTool";
    case Errc::provider_unavailable: return "ProviderUnavailable";
    case Errc::malformed_completion: return "MalformedCompletion";
    case Errc::timeout: return "Timeout";
    case Errc::http_error: return "HttpError";
    case Errc::script_exhausted: return "ScriptExhausted";
    case Errc::no_supported_columns: return "NoSupportedColumns";
    case Errc::io_error: return "IoError";
    case Errc::unsupported_format: return "UnsupportedFormat";
    case Errc::precondition: return "PreconditionViolated";
  }
  return "Unknown";
}

namespace {
std::string join_names(const std::vector<std::string>& names) {
  std::string out = "[";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out + "]";
}
}  // namespace

MissingParamError::MissingParamError(std::vector<std::string> params)
    : Error(Errc::missing_param, join_names(params)), params_(std::move(params)) {}

std::string_view to_string(Dtype dtype) {
  switch (dtype) {
    case Dtype::numeric: return "numeric";
    case Dtype::categorical: return "categorical";
    case Dtype::boolean: return "boolean";
  }
  return "numeric";
}

std::optional<Dtype> parse_dtype(std::string_view text) {
  if (text == "numeric") return Dtype::numeric;
  if (text == "categorical") return Dtype::categorical;
  if (text == "boolean") return Dtype::boolean;
  return std::nullopt;
}

bool matches_dtype(const Value& value, Dtype dtype) {
  switch (dtype) {
    case Dtype::numeric: return std::holds_alternative<double>(value) && std::isfinite(std::get<double>(value));
    case Dtype::categorical: return std::holds_alternative<std::string>(value);
    case Dtype::boolean: return std::holds_alternative<bool>(value);
  }
  return false;
}

std::string render_number(double value) {
  if (value == 0.0) return "0";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

std::string render_literal(const Value& value) {
  if (const auto* d = std::get_if<double>(&value)) return render_number(*d);
  if (const auto* b = std::get_if<bool>(&value)) return *b ? "true" : "false";
  return std::get<std::string>(value);
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  std::size_t i = 0;
  if (text[0] == '-' || text[0] == '+') i = 1;
  bool digits = false;
  bool dot = false;
  for (std::size_t j = i; j < text.size(); ++j) {
    const char c = text[j];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits = true;
    } else if (c == '.' && !dot) {
      dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (!digits) return std::nullopt;
  // from_chars rejects a leading '+'
  std::string_view body = text[0] == '+' ? text.substr(1) : text;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), out, std::chars_format::fixed);
  if (ec != std::errc{} || ptr != body.data() + body.size() || !std::isfinite(out)) return std::nullopt;
  if (out == 0.0) out = 0.0;  // normalise -0
  return out;
}

std::optional<bool> parse_bool(std::string_view text) {
  const std::string lower = to_lower(trim(text));
  if (lower == "yes" || lower == "true" || lower == "1") return true;
  if (lower == "no" || lower == "false" || lower == "0") return false;
  return std::nullopt;
}

std::optional<Value> parse_value(std::string_view text, Dtype dtype) {
  switch (dtype) {
    case Dtype::numeric:
      if (auto d = parse_number(text)) return Value{*d};
      return std::nullopt;
    case Dtype::boolean:
      if (auto b = parse_bool(text)) return Value{*b};
      return std::nullopt;
    case Dtype::categorical: {
      auto t = trim(text);
      if (t.empty()) return std::nullopt;
      return Value{std::string(t)};
    }
  }
  return std::nullopt;
}

std::optional<Value> coerce(const Value& value, Dtype dtype) {
  if (matches_dtype(value, dtype)) return value;
  if (const auto* s = std::get_if<std::string>(&value)) return parse_value(*s, dtype);
  if (dtype == Dtype::categorical) return Value{render_literal(value)};
  if (dtype == Dtype::boolean) {
    if (const auto* d = std::get_if<double>(&value)) {
      if (*d == 0.0) return Value{false};
      if (*d == 1.0) return Value{true};
    }
  }
  if (dtype == Dtype::numeric) {
    if (const auto* b = std::get_if<bool>(&value)) return Value{*b ? 1.0 : 0.0};
  }
  return std::nullopt;
}

json to_json(const Value& value) {
  if (const auto* d = std::get_if<double>(&value)) return *d;
  if (const auto* b = std::get_if<bool>(&value)) return *b;
  return std::get<std::string>(value);
}

std::optional<Value> value_from_json(const json& j) {
  if (j.is_boolean()) return Value{j.get<bool>()};
  if (j.is_number()) return Value{j.get<double>()};
  if (j.is_string()) return Value{j.get<std::string>()};
  return std::nullopt;
}

json to_json(const ValueMap& values) {
  json out = json::object();
  for (const auto& [k, v] : values) out[k] = to_json(v);
  return out;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

std::string format_significant(double value, int digits) {
  if (!std::isfinite(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  std::string out(buf);
  if (out == "-0") out = "0";
  return out;
}

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  std::string out(buf);
  if (out == "-0.00%") out = "0.00%";
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

}  // namespace prescribe
