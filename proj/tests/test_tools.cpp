#include <doctest.h>

#include "prescribe/error.hpp"
#include "prescribe/fixtures.hpp"
#include "prescribe/tools.hpp"

using namespace prescribe;

namespace {

struct Demo {
  Fixture fx = bank_fixture();
  ToolContext ctx() const {
    ToolContext c;
    c.table = &fx.table;
    c.meta = &fx.meta;
    c.features = {"loan", "euribor3m"};
    return c;
  }
};

const Demo& demo() {
  static const Demo d;
  return d;
}

}  // namespace

TEST_CASE("lookup resolves canonical names and aliases") {
  CHECK(lookup("run_opt")->name == "run_optimize");
  CHECK(lookup("show_base_policy")->name == "show_current_policy");
  CHECK(lookup("fly_to_moon") == nullptr);
  for (const auto& tool : registry()) {
    CHECK(lookup(tool.name) == &tool);
    for (const auto& alias : tool.aliases) CHECK(lookup(alias) == &tool);
  }
  CHECK(registry().size() == 5);
}

TEST_CASE("run_optimize on the demo fixture respects the budget") {
  const auto before = demo().fx.table.digest();
  const auto r = execute(*lookup("run_optimize"), {{"num_rules", Value{4.0}}, {"average_budget", Value{3.5}}}, {},
                         demo().ctx());
  const auto* used = r.scalar("budget_used");
  REQUIRE(used);
  CHECK(std::get<double>(used->value) <= 3.5 + 1e-9);
  CHECK(r.scalar("projected_kpi"));
  CHECK(r.scalar("baseline_kpi"));
  REQUIRE(r.charts.size() == 2);
  CHECK(r.charts[0].kind == ChartSpec::Kind::bar);
  CHECK(r.charts[1].kind == ChartSpec::Kind::tree);
  CHECK(demo().fx.table.digest() == before);
}

TEST_CASE("missing parameters are reported in declaration order") {
  try {
    execute(*lookup("run_optimize"), {}, {}, demo().ctx());
    FAIL("expected MissingParamError");
  } catch (const MissingParamError& e) {
    CHECK(e.params() == std::vector<std::string>{"num_rules", "average_budget"});
  }
  CHECK(missing_params(*lookup("run_optimize"), {{"num_rules", Value{2.0}}}, {}) ==
        std::vector<std::string>{"average_budget"});
  CHECK(missing_params(*lookup("counterfactual"), {}, {}) == std::vector<std::string>{"conditions"});
  CHECK(missing_params(*lookup("counterfactual"), {}, {{"loan", Value{true}}}).empty());
}

TEST_CASE("bad parameter types are rejected") {
  auto code = [](const ValueMap& params) {
    try {
      execute(*lookup("run_optimize"), params, {}, demo().ctx());
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::precondition;
  };
  CHECK(code({{"num_rules", Value{std::string("many")}}, {"average_budget", Value{1.0}}}) == Errc::bad_param_type);
  CHECK(code({{"num_rules", Value{2.5}}, {"average_budget", Value{1.0}}}) == Errc::bad_param_type);
  CHECK(code({{"num_rules", Value{2.0}}, {"average_budget", Value{-1.0}}}) == Errc::infeasible_budget);
}

TEST_CASE("show_current_policy reports the KPI with a bar chart") {
  const auto r = execute(*lookup("show_current_policy"), {}, {}, demo().ctx());
  const auto* kpi = r.scalar("kpi");
  REQUIRE(kpi);
  double mean = 0;
  const auto y = demo().fx.table.numeric("CONVERSION");
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  CHECK(std::get<double>(kpi->value) == doctest::Approx(mean));
  REQUIRE(r.charts.size() == 1);
  CHECK(r.charts[0].kind == ChartSpec::Kind::bar);
  CHECK(r.text_summary.find("kpi = " + format_percent(mean)) != std::string::npos);
}

TEST_CASE("rates render as percentages") {
  const Scalar s{"kpi", Value{0.0839}, Unit::outcome};
  CHECK(render_scalar(s, demo().fx.meta) == "8.39%");
  const Scalar n{"rows", Value{12.0}, Unit::count};
  CHECK(render_scalar(n, demo().fx.meta) == "12");
}

TEST_CASE("counterfactual uses the supplied conditions") {
  const ValueMap cond{{"euribor3m", Value{4.964}}};
  const auto r = execute(*lookup("counterfactual"), {}, cond, demo().ctx());
  CHECK(r.conditions == cond);
  CHECK(r.scalar("matching_rows"));
  REQUIRE(r.charts.size() == 1);
  CHECK(r.charts[0].kind == ChartSpec::Kind::line);
}

TEST_CASE("show_causal_effect honours show_error") {
  const auto plain = execute(*lookup("show_causal_effect"), {}, {}, demo().ctx());
  CHECK_FALSE(plain.charts.at(0).series.at(0).y_error.has_value());
  const auto with = execute(*lookup("show_causal_effect"), {{"show_error", Value{true}}}, {}, demo().ctx());
  CHECK(with.charts.at(0).series.at(0).y_error.has_value());
}

TEST_CASE("tool schema serialises") {
  const auto j = to_json(*lookup("run_optimize"));
  CHECK(j["name"] == "run_optimize");
  CHECK(j["aliases"][0] == "run_opt");
  CHECK(j["params"].size() == 2);
}
