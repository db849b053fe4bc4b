#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#include "prescribe/fixtures.hpp"
#include "prescribe/server.hpp"
#include "support.hpp"

using namespace prescribe;

namespace {

struct World {
  testing_support::TempDir dir{"server"};
  Fixture fx = bank_fixture();
  LoadedBundle bundle;
  std::shared_ptr<const DataTable> table;

  World() {
    run_setup(fx.meta, fx.table, {"loan", "euribor3m", "job"}, dir / "bundle");
    bundle = load_bundle(dir / "bundle");
    table = std::make_shared<const DataTable>(fx.table);
  }
};

const World& world() {
  static const World w;
  return w;
}

std::unique_ptr<ApiServer> make_server(std::shared_ptr<Provider> provider = nullptr) {
  if (!provider) provider = ScriptedProvider::from_jsonl(demo_script());
  return std::make_unique<ApiServer>(server_config(world().bundle, world().table, provider));
}

ApiResponse call(ApiServer& s, std::string method, std::string path, std::string body = "",
                 std::map<std::string, std::string> query = {}, std::map<std::string, std::string> headers = {}) {
  return s.handle({std::move(method), std::move(path), std::move(query), std::move(headers), std::move(body)});
}

std::string new_session(ApiServer& s) {
  const auto r = call(s, "POST", "/api/sessions");
  REQUIRE(r.status == 200);
  return r.json_body()["session_id"];
}

ApiResponse say(ApiServer& s, const std::string& id, const std::string& text) {
  auto r = call(s, "POST", "/api/sessions/" + id + "/messages", json{{"text", text}}.dump());
  s.session(id)->wait_idle();
  return r;
}

}  // namespace

TEST_CASE("sessions") {
  ServerConfig empty;
  ApiServer none(empty);
  CHECK(call(none, "POST", "/api/sessions").status == 503);

  auto s = make_server();
  const auto a = new_session(*s);
  const auto b = new_session(*s);
  CHECK(a != b);
  const std::regex uuid("[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}");
  CHECK(std::regex_match(a, uuid));
  CHECK(call(*s, "GET", "/api/sessions/" + a).status == 200);
  CHECK(call(*s, "GET", "/api/sessions/nope").status == 404);
  CHECK(call(*s, "GET", "/api/health").json_body()["status"] == "ok");
  CHECK(call(*s, "GET", "/api/tools").json_body().size() == 5);
}

TEST_CASE("messages validate their body") {
  auto s = make_server();
  const auto id = new_session(*s);
  CHECK(call(*s, "POST", "/api/sessions/" + id + "/messages", "{oops").status == 400);
  CHECK(call(*s, "POST", "/api/sessions/" + id + "/messages", R"({"text": "   "})").status == 422);
  CHECK(call(*s, "POST", "/api/sessions/" + id + "/messages", R"({"nope": 1})").status == 422);
  const auto r = say(*s, id, "Can you optimize my strategy?");
  CHECK(r.status == 200);
  CHECK(r.json_body()["missing"] == json{"num_rules", "average_budget"});
}

TEST_CASE("event stream ordering and resume") {
  auto s = make_server();
  const auto id = new_session(*s);
  say(*s, id, "What is the current policy?");
  say(*s, id, "Show the causal effect");
  const auto all = call(*s, "GET", "/api/sessions/" + id + "/events", "", {{"format", "json"}}).json_body();
  REQUIRE(all.size() >= 6);
  std::set<std::string> started;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i) CHECK(all[i]["seq"].get<int>() == all[i - 1]["seq"].get<int>() + 1);
    if (all[i]["type"] == "tool_started") started.insert(all[i]["payload"]["job"]);
    if (all[i]["type"] == "tool_result") CHECK(started.contains(all[i]["payload"]["job"]));
  }

  const auto cut = all[2]["seq"].get<int>();
  const auto resumed =
      call(*s, "GET", "/api/sessions/" + id + "/events", "", {}, {{"last-event-id", std::to_string(cut)}});
  CHECK(resumed.content_type == "text/event-stream");
  std::string expected;
  for (std::size_t i = 3; i < all.size(); ++i) {
    SessionEvent e{EventType::agent_message, all[i]["payload"], all[i]["seq"].get<std::uint64_t>()};
    const std::string type = all[i]["type"];
    for (auto t : {EventType::agent_message, EventType::tool_started, EventType::tool_result,
                   EventType::conditions_changed, EventType::error})
      if (to_string(t) == type) e.type = t;
    expected += sse_frame(e);
  }
  CHECK(resumed.body == expected);
  CHECK(resumed.body.rfind("id: " + std::to_string(cut + 1) + "\n", 0) == 0);
}

TEST_CASE("conditions endpoints") {
  auto s = make_server();
  const auto id = new_session(*s);
  const auto base = "/api/sessions/" + id + "/conditions";
  say(*s, id, "What if euribor3m is 4.964?");
  CHECK(call(*s, "GET", base).json_body()["conditions"]["euribor3m"] == 4.964);
  CHECK(call(*s, "DELETE", base).json_body()["conditions"].empty());
  CHECK(call(*s, "GET", base).json_body()["conditions"].empty());

  CHECK(call(*s, "PUT", base, R"({"loan": true})").json_body()["conditions"]["loan"] == true);
  CHECK(call(*s, "PUT", base, R"({"conditions": {"euribor3m": 1.313}})").json_body()["conditions"].size() == 2);
  CHECK(call(*s, "DELETE", base + "/loan").json_body()["conditions"].size() == 1);
  CHECK(call(*s, "PUT", base, R"({"euribor3m": "high"})").status == 422);
  CHECK(call(*s, "PUT", base, R"({"nope": 1})").status == 404);
  CHECK(call(*s, "PUT", base, R"([1, 2])").status == 422);
}

TEST_CASE("dataset view and column toggles") {
  auto s = make_server();
  const auto view = call(*s, "GET", "/api/dataset").json_body();
  CHECK(view["row_count"] == world().table->row_count());
  CHECK(view["preview"]["rows"].size() <= 20);
  CHECK(call(*s, "PUT", "/api/dataset/columns/nope", R"({"supported": false})").status == 404);
  CHECK(call(*s, "PUT", "/api/dataset/columns/CAMPAIGN", R"({"supported": false})").status == 422);
  CHECK(call(*s, "PUT", "/api/dataset/columns/loan", R"({"supported": "no"})").status == 422);

  auto ranked = [&](const std::string& id) {
    say(*s, id, "What are the most important features?");
    const auto events = call(*s, "GET", "/api/sessions/" + id + "/events", "", {{"format", "json"}}).json_body();
    std::vector<std::string> names;
    for (const auto& e : events)
      if (e["type"] == "tool_result")
        for (const auto& f : e["payload"]["result"]["details"]["ranked_features"]) names.push_back(f["feature"]);
    return names;
  };
  const auto before = ranked(new_session(*s));
  CHECK(std::find(before.begin(), before.end(), "euribor3m") != before.end());
  CHECK(call(*s, "PUT", "/api/dataset/columns/euribor3m", R"({"supported": false})").status == 200);
  const auto after = ranked(new_session(*s));
  CHECK(std::find(after.begin(), after.end(), "euribor3m") == after.end());
  CHECK_FALSE(after.empty());
}

TEST_CASE("sample questions and transcripts") {
  auto s = make_server();
  const auto id = new_session(*s);
  const auto q = call(*s, "GET", "/api/sessions/" + id + "/sample-questions").json_body()["questions"];
  CHECK(q.size() >= 2);
  CHECK(q.size() <= 3);
  say(*s, id, "What is the current policy?");
  const auto html = call(*s, "GET", "/api/sessions/" + id + "/transcript");
  CHECK(html.content_type.rfind("text/html", 0) == 0);
  CHECK(html.body.find("<svg") != std::string::npos);
  CHECK(html.body.find("<script src") == std::string::npos);
  CHECK(html.body.find("<link") == std::string::npos);
  CHECK(call(*s, "GET", "/api/sessions/" + id + "/transcript", "", {{"format", "json"}}).status == 200);
  CHECK(call(*s, "GET", "/api/sessions/" + id + "/transcript", "", {{"format", "pdf"}}).status == 400);
}

TEST_CASE("credentials never appear in responses or request bodies") {
  const std::string secret = "sk-test-DO-NOT-LEAK-1234567890";
  ::setenv("PRESCRIBE_LLM_API_KEY", secret.c_str(), 1);

  // A stand-in completion endpoint that records what it receives.
  httplib::Server llm;
  std::string seen_body, seen_auth;
  std::mutex m;
  llm.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(m);
    seen_body += req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices": [{"message": {"content": "select_features"}}]})", "application/json");
  });
  const int port = llm.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { llm.listen_after_bind(); });
  ::setenv("PRESCRIBE_LLM_ENDPOINT", ("http://127.0.0.1:" + std::to_string(port)).c_str(), 1);
  ::setenv("PRESCRIBE_LLM_MODEL", "stub", 1);

  ProviderConfig pc;
  pc.kind = ProviderConfig::Kind::http;
  auto provider = make_provider(pc);
  auto s = std::make_unique<ApiServer>(server_config(world().bundle, world().table, provider, "fewshot"));
  const auto id = new_session(*s);
  std::string everything;
  everything += say(*s, id, "What are the most important features?").body;
  for (const auto& path : {"/events", "/conditions", "/sample-questions", "/transcript", ""})
    everything += call(*s, "GET", "/api/sessions/" + id + path).body;
  everything += call(*s, "GET", "/api/dataset").body;
  everything += call(*s, "GET", "/api/tools").body;

  llm.stop();
  t.join();
  ::unsetenv("PRESCRIBE_LLM_API_KEY");
  CHECK(seen_auth == "Bearer " + secret);
  CHECK_FALSE(seen_body.empty());
  CHECK(seen_body.find(secret) == std::string::npos);
  CHECK(everything.find(secret) == std::string::npos);
  CHECK(everything.find("select_features") != std::string::npos);
}

TEST_CASE("real socket round trip") {
  auto s = make_server();
  const int port = s->bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { s->listen(); });
  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  const auto created = client.Post("/api/sessions", "", "application/json");
  REQUIRE(created);
  const std::string id = json::parse(created->body)["session_id"];
  const auto msg = client.Post("/api/sessions/" + id + "/messages", R"({"text": "What is the current policy?"})",
                               "application/json");
  REQUIRE(msg);
  CHECK(msg->status == 200);
  CHECK(msg->get_header_value("Access-Control-Allow-Origin") == "*");
  s->stop();
  t.join();
}
