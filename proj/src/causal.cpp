#include "prescribe/causal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "prescribe/error.hpp"

namespace prescribe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::optional<double> as_number(const Cell& cell) {
  if (!cell) return std::nullopt;
  if (const auto* d = std::get_if<double>(&*cell)) return *d;
  if (const auto* b = std::get_if<bool>(&*cell)) return *b ? 1.0 : 0.0;
  return std::nullopt;
}

std::vector<double> sorted_numbers(const DataTable::Column& column) {
  std::vector<double> v;
  v.reserve(column.cells.size());
  for (const auto& cell : column.cells)
    if (auto d = as_number(cell)) v.push_back(*d);
  std::sort(v.begin(), v.end());
  return v;
}

/// Cut points at the k/bins quantiles (k = 1..bins-1) of sorted values,
/// deduplicated.
std::vector<double> quantile_cuts(const std::vector<double>& sorted, std::size_t bins) {
  std::vector<double> cuts;
  const std::size_t n = sorted.size();
  if (n == 0) return cuts;
  for (std::size_t k = 1; k < bins; ++k) {
    const double c = sorted[std::min(n - 1, k * n / bins)];
    if (cuts.empty() || c != cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

std::vector<double> distinct_sorted(const std::vector<double>& sorted) {
  std::vector<double> out;
  for (double x : sorted)
    if (out.empty() || x != out.back()) out.push_back(x);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ActionLevels

ActionLevels ActionLevels::fit(const DataTable& table, const DatasetMetadata& meta) {
  const auto& col = table.column(meta.action_column);
  ActionLevels out;
  if (col.spec.dtype == Dtype::categorical) {
    std::set<std::string> levels;
    for (const auto& cell : col.cells)
      if (cell) levels.insert(std::get<std::string>(*cell));
    out.numeric_ = false;
    out.labels_.assign(levels.begin(), levels.end());
    out.values_.assign(out.labels_.size(), kNaN);
    return out;
  }

  const auto sorted = sorted_numbers(col);
  const auto distinct = distinct_sorted(sorted);
  if (distinct.size() <= kMaxRawLevels) {
    for (double v : distinct) {
      out.values_.push_back(v);
      if (col.spec.dtype == Dtype::boolean) out.labels_.push_back(v != 0.0 ? "true" : "false");
      else out.labels_.push_back(render_number(v));
    }
    return out;
  }

  out.binned_ = true;
  out.cuts_ = quantile_cuts(sorted, kQuantileBins);
  const std::size_t raw_bins = out.cuts_.size() + 1;
  std::vector<double> sum(raw_bins, 0.0), lo(raw_bins, kNaN), hi(raw_bins, kNaN);
  std::vector<std::size_t> count(raw_bins, 0);
  for (double x : sorted) {
    const auto b = static_cast<std::size_t>(std::upper_bound(out.cuts_.begin(), out.cuts_.end(), x) - out.cuts_.begin());
    sum[b] += x;
    if (count[b]++ == 0) lo[b] = x;
    hi[b] = x;
  }
  out.bin_to_level_.assign(raw_bins, -1);
  for (std::size_t b = 0; b < raw_bins; ++b) {
    if (count[b] == 0) continue;
    out.bin_to_level_[b] = static_cast<int>(out.values_.size());
    out.values_.push_back(sum[b] / static_cast<double>(count[b]));
    out.labels_.push_back("[" + format_significant(lo[b]) + ", " + format_significant(hi[b]) + "]");
  }
  return out;
}

std::optional<std::size_t> ActionLevels::level_of(const Cell& cell) const {
  if (!cell) return std::nullopt;
  if (!numeric_) {
    const auto* s = std::get_if<std::string>(&*cell);
    if (!s) return std::nullopt;
    auto it = std::lower_bound(labels_.begin(), labels_.end(), *s);
    if (it == labels_.end() || *it != *s) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }
  const auto x = as_number(cell);
  if (!x) return std::nullopt;
  if (binned_) {
    const auto b = static_cast<std::size_t>(std::upper_bound(cuts_.begin(), cuts_.end(), *x) - cuts_.begin());
    const int level = bin_to_level_[b];
    if (level < 0) return std::nullopt;
    return static_cast<std::size_t>(level);
  }
  auto it = std::lower_bound(values_.begin(), values_.end(), *x);
  if (it == values_.end() || *it != *x) return std::nullopt;
  return static_cast<std::size_t>(it - values_.begin());
}

std::vector<int> ActionLevels::assign(const DataTable& table, std::string_view column) const {
  const auto& col = table.column(column);
  std::vector<int> out(col.cells.size(), -1);
  for (std::size_t r = 0; r < col.cells.size(); ++r)
    if (auto l = level_of(col.cells[r])) out[r] = static_cast<int>(*l);
  return out;
}

// ---------------------------------------------------------------------------
// CovariateBinning

CovariateBinning CovariateBinning::fit(const DataTable::Column& column) {
  CovariateBinning out;
  out.dtype_ = column.spec.dtype;
  switch (column.spec.dtype) {
    case Dtype::numeric: {
      const auto sorted = sorted_numbers(column);
      const auto distinct = distinct_sorted(sorted);
      if (distinct.size() <= kQuantileBins) {
        out.use_levels_ = true;
        out.levels_ = distinct;
        out.num_codes_ = static_cast<int>(distinct.size()) + 1;
      } else {
        out.cuts_ = quantile_cuts(sorted, kQuantileBins);
        out.num_codes_ = static_cast<int>(out.cuts_.size()) + 2;
      }
      break;
    }
    case Dtype::categorical: {
      std::set<std::string> levels;
      for (const auto& cell : column.cells)
        if (cell) levels.insert(std::get<std::string>(*cell));
      out.categories_.assign(levels.begin(), levels.end());
      out.num_codes_ = static_cast<int>(out.categories_.size()) + 1;
      break;
    }
    case Dtype::boolean:
      out.num_codes_ = 3;
      break;
  }
  return out;
}

int CovariateBinning::code(const Cell& cell) const {
  if (!cell) return missing_code();
  switch (dtype_) {
    case Dtype::numeric: {
      const auto x = as_number(cell);
      if (!x) return missing_code();
      if (use_levels_) {
        auto it = std::lower_bound(levels_.begin(), levels_.end(), *x);
        if (it == levels_.end() || *it != *x) return missing_code();
        return static_cast<int>(it - levels_.begin());
      }
      return static_cast<int>(std::upper_bound(cuts_.begin(), cuts_.end(), *x) - cuts_.begin());
    }
    case Dtype::categorical: {
      const auto* s = std::get_if<std::string>(&*cell);
      if (!s) return missing_code();
      auto it = std::lower_bound(categories_.begin(), categories_.end(), *s);
      if (it == categories_.end() || *it != *s) return missing_code();
      return static_cast<int>(it - categories_.begin());
    }
    case Dtype::boolean: {
      const auto* b = std::get_if<bool>(&*cell);
      if (!b) return missing_code();
      return *b ? 1 : 0;
    }
  }
  return missing_code();
}

Strata stratify(const DataTable& table, std::span<const std::string> features) {
  Strata out;
  const std::size_t n = table.row_count();
  out.id.assign(n, 0);
  if (features.empty()) {
    out.count = n ? 1 : 0;
    return out;
  }
  std::vector<const DataTable::Column*> cols;
  std::vector<CovariateBinning> bins;
  for (const auto& f : features) {
    cols.push_back(&table.column(f));
    bins.push_back(CovariateBinning::fit(*cols.back()));
  }
  std::map<std::vector<int>, int> ids;
  std::vector<int> key(features.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < cols.size(); ++k) key[k] = bins[k].code(cols[k]->cells[r]);
    auto [it, inserted] = ids.emplace(key, static_cast<int>(ids.size()));
    out.id[r] = it->second;
  }
  out.count = ids.size();
  return out;
}

std::vector<double> standardized_means(std::span<const double> y, std::span<const int> level,
                                       std::span<const int> stratum, std::span<const std::size_t> rows,
                                       std::size_t n_levels, std::size_t n_strata) {
  std::vector<double> stratum_weight(n_strata, 0.0);
  std::vector<double> sum(n_levels * n_strata, 0.0);
  std::vector<double> count(n_levels * n_strata, 0.0);
  double total = 0.0;
  for (auto r : rows) {
    const int l = level[r];
    if (l < 0) continue;
    const auto s = static_cast<std::size_t>(stratum[r]);
    stratum_weight[s] += 1.0;
    total += 1.0;
    const auto cell = static_cast<std::size_t>(l) * n_strata + s;
    sum[cell] += y[r];
    count[cell] += 1.0;
  }
  std::vector<double> out(n_levels, kNaN);
  if (total == 0.0) return out;
  for (std::size_t l = 0; l < n_levels; ++l) {
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < n_strata; ++s) {
      const auto cell = l * n_strata + s;
      if (count[cell] == 0.0) continue;
      const double p = stratum_weight[s] / total;
      num += p * (sum[cell] / count[cell]);
      den += p;
    }
    if (den > 0.0) out[l] = num / den;
  }
  return out;
}

std::vector<double> outcome_values(const DataTable& table, const DatasetMetadata& meta) {
  return table.numeric(meta.outcome_column);
}

// ---------------------------------------------------------------------------
// Effect curves

std::optional<std::size_t> EffectEstimate::best_level() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (!std::isfinite(estimates[i])) continue;
    if (!best || estimates[i] > estimates[*best]) best = i;
  }
  return best;
}

namespace {

void check_features(const DataTable& table, std::span<const std::string> features) {
  for (const auto& f : features)
    if (!table.has_column(f)) throw Error(Errc::unknown_column, f);
}

EffectEstimate estimate_with_levels(const DataTable& table, const DatasetMetadata& meta,
                                    std::span<const std::string> features, const ActionLevels& levels,
                                    const EffectOptions& options) {
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no rows to estimate on");
  check_features(table, features);
  const auto y = outcome_values(table, meta);
  const auto level = levels.assign(table, meta.action_column);
  const auto strata = stratify(table, features);
  std::vector<std::size_t> rows;
  rows.reserve(table.row_count());
  for (std::size_t r = 0; r < table.row_count(); ++r)
    if (level[r] >= 0) rows.push_back(r);

  EffectEstimate est;
  est.action_labels = levels.labels();
  est.action_values = levels.values();
  est.rows = table.row_count();
  est.estimates = standardized_means(y, level, strata.id, rows, levels.size(), strata.count);
  est.n_per_level.assign(levels.size(), 0);
  for (auto r : rows) ++est.n_per_level[static_cast<std::size_t>(level[r])];
  double total = 0.0;
  for (double v : y) total += v;
  est.baseline = total / static_cast<double>(y.size());

  const auto supported = std::count_if(est.n_per_level.begin(), est.n_per_level.end(), [](auto n) { return n > 0; });
  if (supported <= 1) {
    est.single_action_level = true;
    est.warnings.push_back("SingleActionLevel: the action takes a single value on these rows");
  }

  if (options.show_error) {
    const std::size_t L = levels.size();
    std::vector<double> s1(L, 0.0), s2(L, 0.0);
    std::vector<double> cnt(L, 0.0);
    std::vector<std::size_t> resample(rows.size());
    for (int b = 0; b < options.bootstrap_resamples; ++b) {
      std::mt19937_64 rng(splitmix64(options.seed ^ splitmix64(static_cast<std::uint64_t>(b) + 1)));
      for (auto& r : resample) r = rows[rng() % rows.size()];
      const auto m = standardized_means(y, level, strata.id, resample, L, strata.count);
      for (std::size_t l = 0; l < L; ++l) {
        if (!std::isfinite(m[l])) continue;
        s1[l] += m[l];
        s2[l] += m[l] * m[l];
        cnt[l] += 1.0;
      }
    }
    std::vector<double> se(L, kNaN);
    for (std::size_t l = 0; l < L; ++l) {
      if (cnt[l] < 2.0) continue;
      const double mean = s1[l] / cnt[l];
      const double var = std::max(0.0, (s2[l] - cnt[l] * mean * mean) / (cnt[l] - 1.0));
      se[l] = std::sqrt(var);
    }
    est.standard_errors = std::move(se);
  }
  return est;
}

}  // namespace

EffectEstimate effect_curve(const DataTable& table, const DatasetMetadata& meta,
                            std::span<const std::string> features, const EffectOptions& options) {
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no rows to estimate on");
  return estimate_with_levels(table, meta, features, ActionLevels::fit(table, meta), options);
}

std::vector<std::size_t> matching_rows(const DataTable& table, const ValueMap& conditions) {
  std::vector<char> keep(table.row_count(), 1);
  for (const auto& [name, value] : conditions) {
    const auto& col = table.column(name);
    const auto typed = coerce(value, col.spec.dtype);
    if (!typed) {
      std::fill(keep.begin(), keep.end(), 0);
      continue;
    }
    if (col.spec.dtype == Dtype::numeric) {
      const double target = std::get<double>(*typed);
      const auto sorted = sorted_numbers(col);
      if (sorted.empty() || target < sorted.front() || target > sorted.back()) {
        std::fill(keep.begin(), keep.end(), 0);
        continue;
      }
      std::vector<double> edges{sorted.front()};
      for (double c : quantile_cuts(sorted, CovariateBinning::kQuantileBins))
        if (c != edges.back()) edges.push_back(c);
      if (sorted.back() != edges.back()) edges.push_back(sorted.back());
      double tolerance = 0.0;
      for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (target >= edges[i] && target <= edges[i + 1]) {
          tolerance = (edges[i + 1] - edges[i]) / 2.0;
          break;
        }
      }
      for (std::size_t r = 0; r < col.cells.size(); ++r) {
        const auto x = as_number(col.cells[r]);
        if (!x || std::abs(*x - target) > tolerance + 1e-12) keep[r] = 0;
      }
    } else {
      const auto literal = render_literal(*typed);
      for (std::size_t r = 0; r < col.cells.size(); ++r) {
        if (!col.cells[r] || render_literal(*col.cells[r]) != literal) keep[r] = 0;
      }
    }
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < keep.size(); ++r)
    if (keep[r]) rows.push_back(r);
  return rows;
}

EffectEstimate conditional_effect(const DataTable& table, const DatasetMetadata& meta, const ValueMap& conditions,
                                  std::span<const std::string> features, const EffectOptions& options) {
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no rows to estimate on");
  if (conditions.empty()) return effect_curve(table, meta, features, options);

  const auto rows = matching_rows(table, conditions);
  if (rows.size() < kMinSupportError)
    throw Error(Errc::no_matching_rows, std::to_string(rows.size()) + " rows satisfy the conditions");

  std::vector<std::string> adjust;
  for (const auto& f : features)
    if (!conditions.contains(f)) adjust.push_back(f);

  const auto levels = ActionLevels::fit(table, meta);
  const auto subset = table.select_rows(rows);
  auto est = estimate_with_levels(subset, meta, adjust, levels, options);
  est.conditions = conditions;
  if (rows.size() < kMinSupportWarn)
    est.warnings.push_back("low support: " + std::to_string(rows.size()) + " matching rows");

  EffectOptions plain = options;
  plain.show_error = false;
  const auto overall = estimate_with_levels(table, meta, adjust, levels, plain);
  est.unconditional_estimates = overall.estimates;
  est.unconditional_baseline = overall.baseline;
  return est;
}

// ---------------------------------------------------------------------------
// Feature selection

namespace {

class CrossValidator {
 public:
  CrossValidator(const DataTable& table, const DatasetMetadata& meta, int folds, std::uint64_t seed)
      : table_(table), folds_(static_cast<std::size_t>(folds)) {
    y_ = outcome_values(table, meta);
    const auto levels = ActionLevels::fit(table, meta);
    n_levels_ = levels.size();
    level_ = levels.assign(table, meta.action_column);
    const std::size_t n = table.row_count();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
    fold_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) fold_[perm[i]] = i % folds_;
  }

  /// Mean squared error of out-of-fold predictions from cell means keyed by
  /// (action level, strata of `features`); falls back to the level mean and
  /// then the global training mean when a cell is empty.
  double loss(std::span<const std::string> features) const {
    const auto strata = stratify(table_, features);
    const std::size_t S = strata.count;
    const std::size_t cells = n_levels_ * S;
    const std::size_t K = folds_;
    std::vector<double> cell_sum((K + 1) * cells, 0.0), cell_cnt((K + 1) * cells, 0.0);
    std::vector<double> lvl_sum((K + 1) * n_levels_, 0.0), lvl_cnt((K + 1) * n_levels_, 0.0);
    std::vector<double> all_sum(K + 1, 0.0), all_cnt(K + 1, 0.0);
    auto accumulate = [&](std::size_t slot, std::size_t cell, std::size_t l, double y) {
      cell_sum[slot * cells + cell] += y;
      cell_cnt[slot * cells + cell] += 1.0;
      lvl_sum[slot * n_levels_ + l] += y;
      lvl_cnt[slot * n_levels_ + l] += 1.0;
      all_sum[slot] += y;
      all_cnt[slot] += 1.0;
    };
    for (std::size_t r = 0; r < y_.size(); ++r) {
      if (level_[r] < 0) continue;
      const auto l = static_cast<std::size_t>(level_[r]);
      const auto cell = l * S + static_cast<std::size_t>(strata.id[r]);
      accumulate(K, cell, l, y_[r]);
      accumulate(fold_[r], cell, l, y_[r]);
    }
    double loss = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < y_.size(); ++r) {
      if (level_[r] < 0) continue;
      const auto k = fold_[r];
      const auto l = static_cast<std::size_t>(level_[r]);
      const auto cell = l * S + static_cast<std::size_t>(strata.id[r]);
      double pred = 0.0;
      const double cc = cell_cnt[K * cells + cell] - cell_cnt[k * cells + cell];
      const double lc = lvl_cnt[K * n_levels_ + l] - lvl_cnt[k * n_levels_ + l];
      const double ac = all_cnt[K] - all_cnt[k];
      if (cc > 0) pred = (cell_sum[K * cells + cell] - cell_sum[k * cells + cell]) / cc;
      else if (lc > 0) pred = (lvl_sum[K * n_levels_ + l] - lvl_sum[k * n_levels_ + l]) / lc;
      else if (ac > 0) pred = (all_sum[K] - all_sum[k]) / ac;
      const double e = y_[r] - pred;
      loss += e * e;
      ++n;
    }
    return n ? loss / static_cast<double>(n) : 0.0;
  }

 private:
  const DataTable& table_;
  std::size_t folds_;
  std::vector<double> y_;
  std::vector<int> level_;
  std::size_t n_levels_ = 0;
  std::vector<std::size_t> fold_;
};

bool strictly_less(double a, double b) { return a < b - 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

FeatureReport select_features(const DataTable& table, const DatasetMetadata& meta, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(Errc::precondition, "folds must be at least 2");
  if (table.row_count() < 2 * static_cast<std::size_t>(folds))
    throw Error(Errc::too_few_rows, std::to_string(table.row_count()) + " rows for " + std::to_string(folds) + " folds");
  std::vector<std::string> remaining;
  for (const auto& c : meta.covariates())
    if (table.has_column(c)) remaining.push_back(c);
  if (remaining.empty()) throw Error(Errc::no_covariates, "no supported covariates");
  std::sort(remaining.begin(), remaining.end());

  const CrossValidator cv(table, meta, folds, seed);
  FeatureReport report;
  report.base_loss = cv.loss({});
  std::vector<std::string> current;
  double previous = report.base_loss;
  while (!remaining.empty()) {
    std::size_t best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      auto trial = current;
      trial.push_back(remaining[i]);
      const double l = cv.loss(trial);
      if (i == 0 || strictly_less(l, best_loss)) {
        best = i;
        best_loss = l;
      }
    }
    current.push_back(remaining[best]);
    report.ranked_features.emplace_back(remaining[best], previous - best_loss);
    report.cv_curve.emplace_back(current.size(), best_loss);
    previous = best_loss;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < report.cv_curve.size(); ++i)
    if (strictly_less(report.cv_curve[i].second, report.cv_curve[argmin].second)) argmin = i;
  for (std::size_t i = 0; i <= argmin; ++i) report.selected.push_back(report.ranked_features[i].first);
  return report;
}

// ---------------------------------------------------------------------------
// Current policy

PolicySnapshot current_policy(const DataTable& table, const DatasetMetadata& meta) {
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no rows");
  const auto levels = ActionLevels::fit(table, meta);
  const auto level = levels.assign(table, meta.action_column);
  std::vector<std::size_t> count(levels.size(), 0);
  std::size_t used = 0;
  for (int l : level) {
    if (l < 0) continue;
    ++count[static_cast<std::size_t>(l)];
    ++used;
  }
  PolicySnapshot snap;
  snap.n = table.row_count();
  for (std::size_t l = 0; l < levels.size(); ++l)
    snap.action_distribution.emplace_back(levels.labels()[l], used ? static_cast<double>(count[l]) / static_cast<double>(used) : 0.0);
  const auto y = outcome_values(table, meta);
  double total = 0.0;
  for (double v : y) total += v;
  snap.kpi = total / static_cast<double>(y.size());
  return snap;
}

// ---------------------------------------------------------------------------
// Charts and serialisation

ChartSpec cv_curve_chart(const FeatureReport& report) {
  ChartSpec chart;
  chart.kind = ChartSpec::Kind::line;
  chart.title = "Cross-validated loss by number of features";
  chart.x_label = "features";
  chart.y_label = "cv loss";
  Series s;
  s.label = "cv loss";
  for (std::size_t i = 0; i < report.cv_curve.size(); ++i) {
    s.x.emplace_back("+" + report.ranked_features[i].first);
    s.y.push_back(report.cv_curve[i].second);
  }
  chart.series.push_back(std::move(s));
  return chart;
}

ChartSpec feature_score_chart(const FeatureReport& report) {
  ChartSpec chart;
  chart.kind = ChartSpec::Kind::bar;
  chart.title = "Loss reduction per selected feature";
  chart.x_label = "feature";
  chart.y_label = "loss reduction";
  Series s;
  s.label = "score";
  for (const auto& [name, score] : report.ranked_features) {
    s.x.emplace_back(name);
    s.y.push_back(score);
  }
  chart.series.push_back(std::move(s));
  return chart;
}

ChartSpec effect_chart(const EffectEstimate& est, const DatasetMetadata& meta) {
  ChartSpec chart;
  chart.kind = ChartSpec::Kind::line;
  chart.title = "Effect of " + meta.action_column + " on " + meta.outcome_column;
  chart.x_label = meta.action_column;
  chart.y_label = meta.outcome_column;
  Series s;
  s.label = est.conditions.empty() ? "average" : "conditioned";
  for (const auto& l : est.action_labels) s.x.emplace_back(l);
  s.y = est.estimates;
  if (est.standard_errors) s.y_error = est.standard_errors;
  chart.series.push_back(s);
  if (est.unconditional_estimates) {
    Series avg;
    avg.label = "average";
    avg.x = s.x;
    avg.y = *est.unconditional_estimates;
    chart.series.push_back(std::move(avg));
  }
  return chart;
}

ChartSpec policy_chart(const PolicySnapshot& snapshot, const DatasetMetadata& meta, const std::string& title) {
  ChartSpec chart;
  chart.kind = ChartSpec::Kind::bar;
  chart.title = title;
  chart.x_label = meta.action_column;
  chart.y_label = "fraction of rows";
  Series s;
  s.label = "share";
  for (const auto& [label, frac] : snapshot.action_distribution) {
    s.x.emplace_back(label);
    s.y.push_back(frac);
  }
  chart.series.push_back(std::move(s));
  return chart;
}

namespace {
json finite_or_null(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return out;
}
}  // namespace

json to_json(const EffectEstimate& est) {
  json j = {{"action_levels", est.action_labels},
            {"estimates", finite_or_null(est.estimates)},
            {"baseline", est.baseline},
            {"n_per_level", est.n_per_level},
            {"conditions", to_json(est.conditions)},
            {"rows", est.rows},
            {"single_action_level", est.single_action_level},
            {"warnings", est.warnings}};
  if (est.standard_errors) j["standard_errors"] = finite_or_null(*est.standard_errors);
  if (est.unconditional_estimates) j["unconditional_estimates"] = finite_or_null(*est.unconditional_estimates);
  if (est.unconditional_baseline) j["unconditional_baseline"] = *est.unconditional_baseline;
  return j;
}

json to_json(const FeatureReport& report) {
  json ranked = json::array();
  for (const auto& [name, score] : report.ranked_features) ranked.push_back({{"feature", name}, {"score", score}});
  json curve = json::array();
  for (const auto& [k, loss] : report.cv_curve) curve.push_back({{"feature_count", k}, {"cv_loss", loss}});
  return {{"ranked_features", ranked}, {"selected", report.selected}, {"cv_curve", curve}, {"base_loss", report.base_loss}};
}

}  // namespace prescribe
