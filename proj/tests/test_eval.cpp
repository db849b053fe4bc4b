#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "prescribe/error.hpp"
#include "prescribe/eval.hpp"
#include "prescribe/fixtures.hpp"
#include "prescribe/genpipeline.hpp"

using namespace prescribe;

namespace {

struct Setup {
  Fixture fx = bank_fixture();
  std::vector<std::string> columns{"loan", "euribor3m", "job"};
  std::vector<PromptSample> db = generate_prompt_database(fx.meta, fx.table, columns, 0);
  std::vector<ExtractorSpec> specs = extractor_specs(fx.meta, columns);
};

const Setup& setup() {
  static const Setup s;
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Per-class precision and recall straight from the label vectors.
struct Direct {
  double precision = 0, recall = 0, f1 = 0;
};
Direct direct_macro(const std::vector<Intent>& gold, const std::vector<Intent>& pred) {
  std::vector<Intent> classes;
  for (auto c : kIntents)
    if (c != Intent::unknown || std::count(gold.begin(), gold.end(), Intent::unknown)) classes.push_back(c);
  Direct d;
  for (auto c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      tp += gold[i] == c && pred[i] == c;
      fp += gold[i] != c && pred[i] == c;
      fn += gold[i] == c && pred[i] != c;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    d.precision += p;
    d.recall += r;
    d.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  const double k = static_cast<double>(classes.size());
  d.precision /= k;
  d.recall /= k;
  d.f1 /= k;
  return d;
}

void load_predictions(std::vector<Intent>& gold, std::vector<Intent>& pred) {
  std::ifstream in(std::string(PRESCRIBE_TEST_DATA) + "/predictions_226_of_238.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    gold.push_back(parse_intent(j["gold"].get<std::string>()));
    pred.push_back(parse_intent(j["predicted"].get<std::string>()));
  }
}

}  // namespace

TEST_CASE("perturbation reaches the worked example") {
  const std::vector<PromptSample> one{{"Show the causal effect", Intent::show_causal_effect, {}}};
  bool found = false;
  for (std::uint64_t seed = 0; seed < 20000 && !found; ++seed)
    found = lower(perturb_queries(one, seed, 1)[0].query) == "could you display the causal effect?";
  CHECK(found);
}

TEST_CASE("perturbation size, determinism, labels and diversity") {
  const auto& db = setup().db;
  const auto a = perturb_queries(db, 0, 238);
  const auto b = perturb_queries(db, 0, 238);
  REQUIRE(a.size() == 238);
  CHECK(render_prompt_db(a) == render_prompt_db(b));
  CHECK(render_prompt_db(perturb_queries(db, 1, 238)) != render_prompt_db(a));

  std::size_t differ = 0;
  for (const auto& p : a) {
    const auto src = std::find_if(db.begin(), db.end(), [&](const PromptSample& s) {
      return s.intent == p.intent && s.params == p.params;
    });
    REQUIRE(src != db.end());
    // Gold values must survive textually.
    for (const auto& [k, v] : p.params)
      if (v && !std::holds_alternative<bool>(*v)) CHECK_MESSAGE(p.query.find(render_literal(*v)) != std::string::npos, p.query);
    bool same_as_any = false;
    for (const auto& s : db) same_as_any |= s.query == p.query;
    differ += !same_as_any;
  }
  CHECK(differ >= 0.8 * 238);
  CHECK(perturb_queries(db, 0, 10).size() == 10);
}

TEST_CASE("metrics on the 226/238 prediction file") {
  std::vector<Intent> gold, pred;
  load_predictions(gold, pred);
  REQUIRE(gold.size() == 238);
  const auto r = metrics_from_predictions(gold, pred);
  CHECK(r.correct == 226);
  CHECK(r.accuracy == doctest::Approx(226.0 / 238.0));
  CHECK(format_accuracy(r) == "0.95 (226/238)");

  std::size_t trace = 0;
  for (std::size_t g = 0; g < r.confusion.size(); ++g) {
    trace += r.confusion[g][g];
    std::size_t row = 0;
    for (auto c : r.confusion[g]) row += c;
    CHECK(row == static_cast<std::size_t>(std::count(gold.begin(), gold.end(), kIntents[g])));
  }
  CHECK(static_cast<double>(trace) / 238.0 == doctest::Approx(r.accuracy));

  const auto d = direct_macro(gold, pred);
  CHECK(r.precision_macro == doctest::Approx(d.precision).epsilon(1e-12));
  CHECK(r.recall_macro == doctest::Approx(d.recall).epsilon(1e-12));
  CHECK(r.f1_macro == doctest::Approx(d.f1).epsilon(1e-12));
}

TEST_CASE("degenerate prediction sets") {
  const std::vector<Intent> gold{Intent::select_features, Intent::run_optimize, Intent::counterfactual,
                                 Intent::show_causal_effect, Intent::show_current_policy};
  const auto perfect = metrics_from_predictions(gold, gold);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1_macro == 1.0);
  CHECK(perfect.classes.size() == 5);

  const auto none = metrics_from_predictions(gold, std::vector<Intent>(gold.size(), Intent::unknown));
  CHECK(none.accuracy == 0.0);
  CHECK(none.recall_macro == 0.0);
}

TEST_CASE("deterministic strategy on its own database") {
  const auto& s = setup();
  const DeterministicStrategy det(s.db, s.fx.meta, s.fx.table);
  const auto intent = evaluate_intent(det, s.db);
  CHECK(intent.accuracy == 1.0);
  CHECK(intent.n == s.db.size());
  CHECK(intent.mean_latency >= 0.0);
  const auto ex = evaluate_extractors(det, s.specs, s.db);
  CHECK(ex.extractor_rates.size() == s.specs.size());
  for (const auto& [name, rate] : ex.extractor_rates) CHECK_MESSAGE(rate == 1.0, name);
  CHECK(ex.extractor_mean == 1.0);
}

TEST_CASE("extractor exact match on canonical literals") {
  class Says : public Strategy {
   public:
    explicit Says(std::string v) : v_(std::move(v)) {}
    std::string name() const override { return "says"; }
    std::string classify_raw(std::string_view) const override { return "unknown"; }
    std::string extract_raw(std::string_view, const ExtractorSpec&) const override { return v_; }

   private:
    std::string v_;
  };
  const ExtractorSpec spec{"euribor3m", Dtype::numeric, "rate", "-1", "", false};
  PromptSample with{"What if euribor3m is 4.964?", Intent::counterfactual, {{"euribor3m", Value{4.964}}}};
  PromptSample without{"hello", Intent::unknown, {{"euribor3m", std::nullopt}}};
  CHECK(evaluate_extractors(Says("4.96"), {spec}, {with}).extractor_rates.at("euribor3m") == 0.0);
  CHECK(evaluate_extractors(Says("4.964"), {spec}, {with}).extractor_rates.at("euribor3m") == 1.0);
  CHECK(evaluate_extractors(Says("-1"), {spec}, {without}).extractor_rates.at("euribor3m") == 1.0);
}

TEST_CASE("report formats") {
  std::vector<Intent> gold, pred;
  load_predictions(gold, pred);
  auto a = metrics_from_predictions(gold, pred);
  a.strategy = "deterministic";
  auto b = metrics_from_predictions(gold, gold);
  b.strategy = "fewshot";

  const auto j = emit_report({a, b}, "json");
  const auto parsed = json::parse(j)["reports"];
  REQUIRE(parsed.size() == 2);
  CHECK(emit_report({report_from_json(parsed[0]), report_from_json(parsed[1])}, "json") == j);

  const auto md = emit_report({a, b}, "markdown");
  CHECK(md.find("| deterministic |") != std::string::npos);
  CHECK(md.find("| fewshot |") != std::string::npos);
  CHECK(md.find("0.95 (226/238)") != std::string::npos);
  CHECK(md.find("show_causal_effect") != std::string::npos);  // confusion grid labels

  const auto csv = emit_report({a}, "csv");
  CHECK(csv.substr(0, csv.find('\n')) ==
        "strategy,n,correct,accuracy,f1_macro,precision_macro,recall_macro,mean_latency_s,extractor_mean");
  try {
    emit_report({a}, "xml");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unsupported_format);
  }
}
