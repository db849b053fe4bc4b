#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "prescribe/error.hpp"
#include "prescribe/fixtures.hpp"
#include "prescribe/genpipeline.hpp"
#include "prescribe/nlu.hpp"

using namespace prescribe;

namespace {

struct Setup {
  Fixture fx = bank_fixture();
  std::vector<std::string> columns = fx.meta.covariates();
  std::vector<PromptSample> db = generate_prompt_database(fx.meta, fx.table, columns, 0);
  std::vector<ExtractorSpec> specs = extractor_specs(fx.meta, columns);
  DeterministicStrategy det{db, fx.meta, fx.table};

  const ExtractorSpec& spec(const std::string& name) const {
    for (const auto& s : specs)
      if (s.param == name) return s;
    throw std::runtime_error(name);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

/// Returns a fixed string for every call.
class Fixed : public Strategy {
 public:
  explicit Fixed(std::string out) : out_(std::move(out)) {}
  std::string name() const override { return "fixed"; }
  std::string classify_raw(std::string_view) const override { return out_; }
  std::string extract_raw(std::string_view, const ExtractorSpec&) const override { return out_; }

 private:
  std::string out_;
};

/// Random printable noise, different on every call.
class Noise : public Strategy {
 public:
  std::string name() const override { return "noise"; }
  std::string classify_raw(std::string_view) const override { return draw(); }
  std::string extract_raw(std::string_view, const ExtractorSpec&) const override { return draw(); }

 private:
  std::string draw() const {
    static const std::string alphabet = "0123456789.-+eE,abcUnknown xyz-1nanINF ";
    std::uniform_int_distribution<std::size_t> len(0, 12), pick(0, alphabet.size() - 1);
    std::string s(len(rng_), ' ');
    for (auto& c : s) c = alphabet[pick(rng_)];
    return s;
  }
  mutable std::mt19937 rng_{42};
};

std::shared_ptr<ScriptedProvider> replying(const std::string& text) {
  return std::make_shared<ScriptedProvider>(std::vector<ScriptedProvider::Rule>{{"", text, false}});
}

}  // namespace

TEST_CASE("deterministic intent examples") {
  const auto& s = setup();
  CHECK(classify_intent("What are the most important features?", s.det) == Intent::select_features);
  CHECK(classify_intent("Show the causal effect", s.det) == Intent::show_causal_effect);
  CHECK(classify_intent("pls show causal effects!!", s.det) == Intent::show_causal_effect);
  CHECK(classify_intent("", s.det) == Intent::unknown);
  CHECK(classify_intent("zxq vlorp quandle frib", s.det) == Intent::unknown);
}

TEST_CASE("deterministic strategy reproduces its own database") {
  const auto& s = setup();
  for (const auto& sample : s.db) CHECK(classify_intent(sample.query, s.det) == sample.intent);
}

TEST_CASE("parameter extraction with the dtype gate") {
  const auto& s = setup();
  CHECK(extract_param("What if euribor3m is 4.964?", s.spec("euribor3m"), s.det) == Value{4.964});
  CHECK_FALSE(extract_param("hello", s.spec("euribor3m"), s.det));
  CHECK_FALSE(extract_param("hello", s.spec("job"), s.det));
  ExtractorSpec price{"price_range", Dtype::numeric, "price range", "-1", "", false};
  CHECK_FALSE(extract_param("Show me the policy for the BOS-ATL market", price, Fixed("BOS-ATL")));
  CHECK_FALSE(gate("-1", price));
  CHECK_FALSE(gate("Unknown", s.spec("job")));
  CHECK(gate("3.5", price) == Value{3.5});
  CHECK(gate("yes", s.spec("show_error")) == Value{true});
  CHECK_FALSE(gate("2.5", s.spec("num_rules")));
  CHECK(gate("4", s.spec("num_rules")) == Value{4.0});
}

TEST_CASE("numeric gate holds against arbitrary strategy output") {
  const Noise noise;
  const auto& spec = setup().spec("euribor3m");
  for (int i = 0; i < 2000; ++i) {
    const auto v = extract_param("anything", spec, noise);
    if (!v) continue;
    REQUIRE(std::holds_alternative<double>(*v));
    CHECK(std::isfinite(std::get<double>(*v)));
  }
  for (int i = 0; i < 500; ++i) {
    const auto intent = classify_intent("anything", noise);
    CHECK(std::find(kIntents.begin(), kIntents.end(), intent) != kIntents.end());
  }
}

TEST_CASE("numeric pair with a sentinel side") {
  const auto [lo, hi] = parse_numeric_pair("Unknown-800");
  CHECK_FALSE(lo);
  CHECK(hi == 800.0);
  const auto [a, b] = parse_numeric_pair("100-800");
  CHECK(a == 100.0);
  CHECK(b == 800.0);
}

TEST_CASE("intent parsing is closed-set") {
  CHECK(parse_intent("counterfactual") == Intent::counterfactual);
  CHECK(parse_intent(" 'run_opt'. ") == Intent::run_optimize);
  CHECK(parse_intent("SHOW_BASE_POLICY") == Intent::show_current_policy);
  CHECK(parse_intent("banana") == Intent::unknown);
}

TEST_CASE("few-shot strategy passes provider output through the gates") {
  const auto& s = setup();
  const FewShotStrategy cf(s.db, replying("counterfactual"), s.specs);
  CHECK(classify_intent("anything at all", cf) == Intent::counterfactual);
  const FewShotStrategy banana(s.db, replying("banana"), s.specs);
  CHECK(classify_intent("anything at all", banana) == Intent::unknown);
  CHECK(banana.malformed() == 1);
  const FewShotStrategy pair(s.db, replying("Unknown-800"), s.specs);
  const auto [lo, hi] = parse_numeric_pair(pair.extract_raw("Change the maximum to be 800", s.spec("euribor3m")));
  CHECK_FALSE(lo);
  CHECK(hi == 800.0);
}

TEST_CASE("few-shot examples are shared, stratified and seeded") {
  const auto& s = setup();
  const FewShotStrategy a(s.db, replying("unknown"), s.specs, 16, 3);
  const FewShotStrategy b(s.db, replying("unknown"), s.specs, 16, 3);
  REQUIRE(a.examples().size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(a.examples()[i].query == b.examples()[i].query);
  std::set<Intent> covered;
  for (const auto& e : a.examples()) covered.insert(e.intent);
  CHECK(covered.size() >= 5);
  // The same examples appear in the intent prompt and every extractor prompt.
  const auto intent_prompt = a.intent_prompt("q");
  const auto extractor_prompt = a.extractor_prompt("q", s.spec("euribor3m"));
  for (const auto& e : a.examples()) {
    CHECK(intent_prompt[0].content.find(e.query) != std::string::npos);
    CHECK(extractor_prompt[0].content.find(e.query) != std::string::npos);
  }
  CHECK(extractor_prompt.back().content == "command: q");
}

TEST_CASE("extract_all covers every spec") {
  const auto& s = setup();
  const auto two = extract_all("What if euribor3m is 4.964 and loan is true?", s.specs, s.det);
  CHECK(two.values.size() == s.specs.size());
  const auto present = two.present();
  CHECK(present.size() == 2);
  CHECK(present.at("euribor3m") == Value{4.964});
  CHECK(present.at("loan") == Value{true});

  const auto none = extract_all("hello", s.specs, s.det);
  CHECK(none.values.size() == s.specs.size());
  CHECK(none.present().empty());

  CHECK(extract_all("hello", {}, s.det).values.empty());
}

TEST_CASE("provider failures leave values absent and are recorded") {
  class Failing : public Provider {
   public:
    std::string name() const override { return "failing"; }
    std::string complete(const std::vector<ChatMessage>&, const CompletionOptions&) override {
      throw Error(Errc::provider_unavailable, "down");
    }
  };
  const auto& s = setup();
  const FewShotStrategy f(s.db, std::make_shared<Failing>(), s.specs);
  const auto r = extract_all("What if euribor3m is 4.964?", s.specs, f);
  CHECK(r.values.size() == s.specs.size());
  CHECK(r.present().empty());
  CHECK(r.errors.size() == s.specs.size());
}

TEST_CASE("instruction templates") {
  const auto& spec = setup().spec("euribor3m");
  const auto text = render_instruction(spec);
  CHECK(text.find("\"euribor3m\"") != std::string::npos);
  CHECK(text.find("output -1") != std::string::npos);
  CHECK(text.substr(text.size() - 10) == "<examples>");
  CHECK(null_default_for(Dtype::categorical) == "Unknown");
  CHECK(null_default_for(Dtype::boolean) == "Unknown");
  CHECK(intent_instruction().find("unknown") != std::string::npos);
}

TEST_CASE("tokenizer keeps decimals and hyphenated words") {
  CHECK(tokenize("What if euribor3m is 4.964?") ==
        std::vector<std::string>{"what", "if", "euribor3m", "is", "4.964"});
  CHECK(tokenize("blue-collar, please!") == std::vector<std::string>{"blue-collar", "please"});
}
