#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prescribe/chart.hpp"
#include "prescribe/dataset.hpp"

namespace prescribe {

/// Discretisation of the action column. Numeric actions with at most ten
/// distinct values keep their raw levels; wider numeric actions fall into
/// five quantile bins represented by their within-bin mean. Categorical and
/// boolean actions use their sorted levels.
class ActionLevels {
 public:
  static constexpr std::size_t kMaxRawLevels = 10;
  static constexpr std::size_t kQuantileBins = 5;

  static ActionLevels fit(const DataTable& table, const DatasetMetadata& meta);

  std::size_t size() const noexcept { return labels_.size(); }
  bool numeric() const noexcept { return numeric_; }
  bool binned() const noexcept { return binned_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  /// Representative numeric value per level (NaN for non-numeric actions).
  const std::vector<double>& values() const noexcept { return values_; }

  std::optional<std::size_t> level_of(const Cell& cell) const;
  /// Level index per row, -1 where the row matches no level.
  std::vector<int> assign(const DataTable& table, std::string_view column) const;

 private:
  std::vector<std::string> labels_;
  std::vector<double> values_;
  std::vector<double> cuts_;           // binned: lower bounds of bins 1..k
  std::vector<int> bin_to_level_;      // binned: raw bin -> compressed level
  bool numeric_ = true;
  bool binned_ = false;
};

/// Coarsening of one covariate for stratification. Numeric columns with more
/// than four distinct values use quartile cut points; otherwise every level
/// is its own code. Missing cells get a dedicated code.
class CovariateBinning {
 public:
  static constexpr std::size_t kQuantileBins = 4;

  static CovariateBinning fit(const DataTable::Column& column);

  int code(const Cell& cell) const;
  int num_codes() const noexcept { return num_codes_; }
  int missing_code() const noexcept { return num_codes_ - 1; }

 private:
  Dtype dtype_ = Dtype::numeric;
  std::vector<double> cuts_;
  std::vector<double> levels_;
  std::vector<std::string> categories_;
  bool use_levels_ = false;
  int num_codes_ = 1;
};

/// Dense stratum id per row over the joint coarsening of `features`.
struct Strata {
  std::vector<int> id;
  std::size_t count = 0;
};
Strata stratify(const DataTable& table, std::span<const std::string> features);

/// Standardised per-level means over `rows` (duplicates allowed):
/// sum_s p(s) * mean(y | level, s), skipping strata with no support for the
/// level and renormalising the remaining weights. NaN for levels without rows.
std::vector<double> standardized_means(std::span<const double> y, std::span<const int> level,
                                       std::span<const int> stratum, std::span<const std::size_t> rows,
                                       std::size_t n_levels, std::size_t n_strata);

struct EffectOptions {
  bool show_error = false;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 200;
};

struct EffectEstimate {
  std::vector<std::string> action_labels;
  std::vector<double> action_values;
  std::vector<double> estimates;  // outcome units; NaN for unsupported levels
  double baseline = 0.0;          // mean outcome over the rows used
  std::optional<std::vector<double>> standard_errors;
  ValueMap conditions;
  std::vector<std::size_t> n_per_level;
  std::size_t rows = 0;
  bool single_action_level = false;
  /// Unconditional curve on the full table, aligned to action_labels.
  std::optional<std::vector<double>> unconditional_estimates;
  std::optional<double> unconditional_baseline;
  std::vector<std::string> warnings;

  double contrast(std::size_t a1, std::size_t a2) const { return estimates.at(a1) - estimates.at(a2); }
  std::optional<std::size_t> best_level() const;
};

EffectEstimate effect_curve(const DataTable& table, const DatasetMetadata& meta,
                            std::span<const std::string> features, const EffectOptions& options = {});

/// Minimum matching rows for a conditional estimate: below the error floor
/// the call fails, below the warning floor it carries a warning.
inline constexpr std::size_t kMinSupportError = 5;
inline constexpr std::size_t kMinSupportWarn = 30;

/// Rows satisfying every condition. Numeric conditions match cells within
/// half the width of the quartile interval holding the value; categorical and
/// boolean conditions match exactly. Throws unknown_column.
std::vector<std::size_t> matching_rows(const DataTable& table, const ValueMap& conditions);

EffectEstimate conditional_effect(const DataTable& table, const DatasetMetadata& meta, const ValueMap& conditions,
                                  std::span<const std::string> features, const EffectOptions& options = {});

struct FeatureReport {
  std::vector<std::pair<std::string, double>> ranked_features;  // score = CV loss reduction
  std::vector<std::string> selected;
  std::vector<std::pair<std::size_t, double>> cv_curve;  // (feature count, CV loss)
  double base_loss = 0.0;                                // action-only model
};

/// Greedy forward selection on K-fold cross-validated squared loss of a
/// group-mean outcome model keyed by (action level, covariate strata).
FeatureReport select_features(const DataTable& table, const DatasetMetadata& meta, int folds = 5,
                              std::uint64_t seed = 0);

struct PolicySnapshot {
  std::vector<std::pair<std::string, double>> action_distribution;
  double kpi = 0.0;
  std::size_t n = 0;
};

PolicySnapshot current_policy(const DataTable& table, const DatasetMetadata& meta);

std::vector<double> outcome_values(const DataTable& table, const DatasetMetadata& meta);

ChartSpec cv_curve_chart(const FeatureReport& report);
ChartSpec feature_score_chart(const FeatureReport& report);
ChartSpec effect_chart(const EffectEstimate& estimate, const DatasetMetadata& meta);
ChartSpec policy_chart(const PolicySnapshot& snapshot, const DatasetMetadata& meta, const std::string& title);

json to_json(const EffectEstimate& estimate);
json to_json(const FeatureReport& report);

}  // namespace prescribe
