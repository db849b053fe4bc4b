#include <doctest.h>

#include "prescribe/error.hpp"
#include "prescribe/llm.hpp"

using namespace prescribe;

namespace {

std::vector<ChatMessage> convo(std::string last, Role role = Role::user) {
  return {{Role::system, "You are helpful."}, {role, std::move(last)}};
}

}  // namespace

TEST_CASE("scripted rule fires on a follow-up injection") {
  ScriptedProvider p({{"missing parameters", "Happy to help! Could you provide num_rules and average_budget?", false},
                      {"", "fallback", false}});
  auto msgs = convo("run the optimizer");
  msgs.push_back({Role::injected_system, "missing parameters: [num_rules, average_budget]"});
  CHECK(p.complete(msgs, {}) == "Happy to help! Could you provide num_rules and average_budget?");
  CHECK(p.complete(convo("hello"), {}) == "fallback");
  CHECK(p.calls().size() == 2);
}

TEST_CASE("scripted provider is deterministic and honours once") {
  const std::string script =
      R"({"match": "hi", "respond": "first", "once": true})"
      "\n"
      R"({"match": "hi", "respond": "later"})"
      "\n";
  auto a = ScriptedProvider::from_jsonl(script);
  auto b = ScriptedProvider::from_jsonl(script);
  for (int i = 0; i < 3; ++i) CHECK(a->complete(convo("hi"), {}) == b->complete(convo("hi"), {}));
  auto c = ScriptedProvider::from_jsonl(script);
  CHECK(c->complete(convo("hi"), {}) == "first");
  CHECK(c->complete(convo("hi"), {}) == "later");
  CHECK_THROWS_AS(ScriptedProvider::from_jsonl("not json"), Error);
}

TEST_CASE("scripted provider fills in an embedded result") {
  ScriptedProvider p({{"Simply respond", "Here is what I found: {{result}}.", false}});
  auto msgs = convo("show policy");
  msgs.push_back({Role::injected_system,
                  "Simply respond to the user that the result is kpi = 8.39%. Say nothing else."});
  CHECK(p.complete(msgs, {}) == "Here is what I found: kpi = 8.39%.");
}

TEST_CASE("unmatched script is exhausted") {
  ScriptedProvider p({{"never", "x", false}});
  try {
    p.complete(convo("hello"), {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::script_exhausted);
  }
}

TEST_CASE("echo returns the final message") {
  EchoProvider p;
  CHECK(p.complete(convo("repeat me"), {}) == "repeat me");
}

TEST_CASE("message list validation") {
  EchoProvider p;
  auto code = [&](const std::vector<ChatMessage>& m) {
    try {
      p.complete(m, {});
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::io_error;
  };
  CHECK(code({}) == Errc::precondition);
  CHECK(code({{Role::user, "no system"}}) == Errc::precondition);
  CHECK(code(convo("")) == Errc::precondition);
  CHECK(code({{Role::system, "s"}, {Role::injected_system, "x"}, {Role::user, "u"}}) == Errc::precondition);
}

TEST_CASE("provider configuration") {
  CHECK(parse_provider_kind("scripted") == ProviderConfig::Kind::scripted);
  CHECK(parse_provider_kind("http") == ProviderConfig::Kind::http);
  CHECK(parse_provider_kind("echo") == ProviderConfig::Kind::echo);
  CHECK_FALSE(parse_provider_kind("magic"));
  CHECK(make_provider({})->name() == "echo");
}

TEST_CASE("http provider without a reachable endpoint is unavailable") {
  HttpProvider::Settings s;
  s.endpoint = "http://127.0.0.1:1";
  s.model = "m";
  s.timeout = std::chrono::milliseconds(500);
  HttpProvider p(s);
  try {
    p.complete(convo("hello"), {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::provider_unavailable);
  }
}
