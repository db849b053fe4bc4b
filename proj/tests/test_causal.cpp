#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "prescribe/causal.hpp"
#include "prescribe/error.hpp"
#include "prescribe/fixtures.hpp"
#include "support.hpp"

using namespace prescribe;

namespace {

struct Built {
  DatasetMetadata meta;
  DataTable table;
};

/// Y = 2A + 3*X1 + 0*X2 with A in {0,1,2}, X1 in {0,1,2}, X2 in {0,1,2}.
Built linear_three(std::size_t n, std::uint32_t seed) {
  auto meta = testing_support::small_meta({{"X1", Dtype::numeric}, {"X2", Dtype::numeric}});
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d3(0, 2);
  std::ostringstream csv;
  csv << "X1,X2,A,Y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int a = d3(rng), x1 = d3(rng), x2 = d3(rng);
    csv << x1 << ',' << x2 << ',' << a << ',' << 2 * a + 3 * x1 << '\n';
  }
  return {meta, parse_table(meta, csv.str())};
}

Built from_rows(const std::vector<std::array<double, 3>>& rows) {
  auto meta = testing_support::small_meta({{"X1", Dtype::numeric}});
  std::ostringstream csv;
  csv << "X1,A,Y\n";
  for (const auto& r : rows) csv << r[0] << ',' << r[1] << ',' << r[2] << '\n';
  return {meta, parse_table(meta, csv.str())};
}

/// In-sample squared-loss reduction of the (A, feature) group-mean model over the A-only model.
double univariate_reduction(const DataTable& t, const std::string& feature) {
  const auto a = t.numeric("A"), y = t.numeric("Y"), x = t.numeric(feature);
  auto sse = [&](bool with_x) {
    std::map<std::pair<double, double>, std::pair<double, double>> g;
    for (std::size_t i = 0; i < y.size(); ++i) {
      auto& s = g[{a[i], with_x ? x[i] : 0.0}];
      s.first += y[i];
      s.second += 1;
    }
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto& s = g[{a[i], with_x ? x[i] : 0.0}];
      total += std::pow(y[i] - s.first / s.second, 2);
    }
    return total;
  };
  return sse(false) - sse(true);
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

}  // namespace

TEST_CASE("noiseless Y = 2A gives the analytic curve") {
  std::vector<std::array<double, 3>> rows;
  for (int i = 0; i < 30; ++i) rows.push_back({double(i % 4), double(i % 3), 2.0 * (i % 3)});
  const auto b = from_rows(rows);
  const auto est = effect_curve(b.table, b.meta, {});
  REQUIRE(est.estimates.size() == 3);
  CHECK(est.estimates[0] == doctest::Approx(0.0));
  CHECK(est.estimates[1] == doctest::Approx(2.0));
  CHECK(est.estimates[2] == doctest::Approx(4.0));
  CHECK(est.contrast(2, 0) == doctest::Approx(4.0));
  CHECK(*est.best_level() == 2);
}

TEST_CASE("no features means raw per-level means") {
  const auto fx = confounded_scm();
  const auto est = effect_curve(fx.table, fx.meta, {});
  const auto a = fx.table.numeric("A"), y = fx.table.numeric("Y");
  std::map<double, std::pair<double, double>> raw;
  for (std::size_t i = 0; i < a.size(); ++i) raw[a[i]].first += y[i], raw[a[i]].second += 1;
  REQUIRE(est.estimates.size() == raw.size());
  std::size_t k = 0;
  for (const auto& [level, s] : raw) CHECK(est.estimates[k++] == doctest::Approx(s.first / s.second).epsilon(1e-12));
}

TEST_CASE("select_features ranks the real driver first") {
  const auto b = linear_three(2000, 7);
  const auto report = select_features(b.table, b.meta);
  CHECK(univariate_reduction(b.table, "X1") > univariate_reduction(b.table, "X2"));
  REQUIRE(report.ranked_features.size() == 2);
  CHECK(report.ranked_features[0].first == "X1");
  CHECK(report.ranked_features[0].second > report.ranked_features[1].second);
  CHECK(std::find(report.selected.begin(), report.selected.end(), "X1") != report.selected.end());
  for (std::size_t i = 1; i < report.cv_curve.size(); ++i)
    CHECK(report.cv_curve[i].first > report.cv_curve[i - 1].first);
}

TEST_CASE("select_features with one covariate") {
  std::vector<std::array<double, 3>> rows;
  for (int i = 0; i < 60; ++i) rows.push_back({double(i % 5), double(i % 3), double(i % 5 + i % 3)});
  const auto b = from_rows(rows);
  const auto report = select_features(b.table, b.meta);
  REQUIRE(report.ranked_features.size() == 1);
  CHECK(report.ranked_features[0].first == "X1");
  CHECK(report.selected == std::vector<std::string>{"X1"});
}

TEST_CASE("constant outcome scores every feature zero") {
  auto meta = testing_support::small_meta({{"X1", Dtype::numeric}, {"X2", Dtype::numeric}});
  std::ostringstream csv;
  csv << "X1,X2,A,Y\n";
  for (int i = 0; i < 50; ++i) csv << i % 4 << ',' << i % 7 << ',' << i % 3 << ",1\n";
  const auto table = parse_table(meta, csv.str());
  const auto report = select_features(table, meta);
  for (const auto& [name, score] : report.ranked_features) CHECK(score == doctest::Approx(0.0));
  CHECK(report.selected.size() <= 1);
  if (!report.selected.empty()) CHECK(report.selected[0] == "X1");
}

TEST_CASE("conditional effect with no conditions equals the plain curve") {
  const auto fx = bank_fixture();
  const std::vector<std::string> feats{"loan"};
  const auto plain = effect_curve(fx.table, fx.meta, feats);
  const auto cond = conditional_effect(fx.table, fx.meta, {}, feats);
  CHECK(cond.estimates == plain.estimates);
  CHECK(cond.n_per_level == plain.n_per_level);
}

TEST_CASE("conditional effect on euribor3m = 4.964 uses the matching subset") {
  const auto fx = bank_fixture();
  const ValueMap cond{{"euribor3m", Value{4.964}}};
  const auto est = conditional_effect(fx.table, fx.meta, cond, {});
  const auto rows = matching_rows(fx.table, cond);
  std::size_t brute = 0;
  for (double v : fx.table.numeric("euribor3m")) brute += v == 4.964;
  // Nearest-bin matching is at least as wide as exact equality.
  CHECK(rows.size() >= brute);
  std::size_t total = 0;
  for (auto n : est.n_per_level) total += n;
  CHECK(total == rows.size());
  CHECK(est.rows == rows.size());
  CHECK(est.conditions.at("euribor3m") == Value{4.964});
  CHECK(est.unconditional_estimates.has_value());
}

TEST_CASE("condition outside the column range has no matching rows") {
  const auto fx = bank_fixture();
  CHECK(code_of([&] { conditional_effect(fx.table, fx.meta, {{"euribor3m", Value{99.0}}}, {}); }) ==
        Errc::no_matching_rows);
  CHECK(code_of([&] { conditional_effect(fx.table, fx.meta, {{"nope", Value{1.0}}}, {}); }) == Errc::unknown_column);
}

TEST_CASE("n_per_level sums to the row count without conditions") {
  const auto fx = bank_fixture();
  const auto est = effect_curve(fx.table, fx.meta, std::vector<std::string>{"euribor3m"});
  std::size_t total = 0;
  for (auto n : est.n_per_level) total += n;
  CHECK(total == fx.table.row_count());
}

TEST_CASE("current policy snapshot") {
  {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < 100; ++i) rows.push_back({double(i % 4), double(i % 3), i < 8 ? 1.0 : 0.0});
    const auto b = from_rows(rows);
    CHECK(current_policy(b.table, b.meta).kpi == doctest::Approx(0.08));
    CHECK(current_policy(b.table, b.meta).n == 100);
  }
  {
    std::vector<std::array<double, 3>> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({double(i), 0.0, 1.0});
    const auto b = from_rows(rows);
    const auto snap = current_policy(b.table, b.meta);
    REQUIRE(snap.action_distribution.size() == 1);
    CHECK(snap.action_distribution[0].first == "0");
    CHECK(snap.action_distribution[0].second == 1.0);
    CHECK(snap.kpi == 1.0);
  }
}

TEST_CASE("bootstrap errors are nonnegative and shrink with more data") {
  auto median_se = [](std::size_t n) {
    std::vector<double> medians;
    for (std::uint32_t s = 0; s < 20; ++s) {
      const auto fx = noiseless_scm(n, 100 + s);
      EffectOptions opt;
      opt.show_error = true;
      opt.seed = s;
      const auto est = effect_curve(fx.table, fx.meta, {}, opt);
      REQUIRE(est.standard_errors.has_value());
      for (double se : *est.standard_errors) CHECK(se >= 0.0);
      medians.push_back((*est.standard_errors)[1]);
    }
    std::nth_element(medians.begin(), medians.begin() + 10, medians.end());
    return medians[10];
  };
  CHECK(median_se(2000) < median_se(500));
}

TEST_CASE("estimates and reports are deterministic") {
  const auto fx = bank_fixture(800, 3);
  EffectOptions opt;
  opt.show_error = true;
  opt.seed = 5;
  const std::vector<std::string> feats{"euribor3m", "loan"};
  CHECK(to_json(effect_curve(fx.table, fx.meta, feats, opt)).dump() ==
        to_json(effect_curve(fx.table, fx.meta, feats, opt)).dump());
  CHECK(to_json(select_features(fx.table, fx.meta, 5, 9)).dump() ==
        to_json(select_features(fx.table, fx.meta, 5, 9)).dump());
}

TEST_CASE("action levels bin wide numeric actions") {
  std::vector<std::array<double, 3>> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({0.0, double(i % 20), 1.0});
  const auto b = from_rows(rows);
  const auto levels = ActionLevels::fit(b.table, b.meta);
  CHECK(levels.binned());
  CHECK(levels.size() == ActionLevels::kQuantileBins);
  for (std::size_t i = 1; i < levels.values().size(); ++i) CHECK(levels.values()[i] > levels.values()[i - 1]);
}
