#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prescribe {

enum class Errc {
  missing_field,
  unknown_dtype,
  action_equals_outcome,
  duplicate_column,
  invalid_metadata,
  unknown_column,
  file_not_found,
  header_mismatch,
  empty_table,
  too_few_rows,
  no_covariates,
  no_matching_rows,
  infeasible_budget,
  non_numeric_action_without_costs,
  too_few_rules,
  missing_param,
  bad_param_type,
  unknown_tool,
  provider_unavailable,
  malformed_completion,
  timeout,
  http_error,
  script_exhausted,
  no_supported_columns,
  io_error,
  unsupported_format,
  precondition,
};

std::string_view to_string(Errc code);

/// Domain error carrying a machine-checkable code. Every module throws this
/// (or a subclass) for the error cases named in its contract.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class MissingParamError : public Error {
 public:
  explicit MissingParamError(std::vector<std::string> params);

  const std::vector<std::string>& params() const noexcept { return params_; }

 private:
  std::vector<std::string> params_;
};

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& message)
      : Error(Errc::http_error, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace prescribe
