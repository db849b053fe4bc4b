#include <doctest.h>

#include <sstream>

#include "prescribe/cli.hpp"
#include "prescribe/fixtures.hpp"
#include "support.hpp"

using namespace prescribe;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct World {
  testing_support::TempDir dir{"cli"};
  std::string meta_path;
  std::string data_path;
  std::string bundle;

  World() {
    meta_path = write_fixture(bank_fixture(), dir / "fixture").string();
    data_path = (dir / "fixture" / "data.csv").string();
    bundle = (dir / "bundle").string();
    const auto r = cli({"setup", "--meta", meta_path, "--data", data_path, "--out", bundle});
    if (r.code != 0) throw std::runtime_error("setup failed: " + r.err);
  }
};

const World& world() {
  static const World w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"setup", "--data", world().data_path, "--out", "x"}).code == 2);
  CHECK(cli({"setup", "--meta", "/nonexistent.json", "--data", world().data_path, "--out", "x"}).code == 2);
  CHECK(cli({"eval", "--bundle", world().bundle, "--strategy", "magic"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("setup writes a reproducible bundle") {
  const auto& w = world();
  const auto again = (w.dir / "again").string();
  const auto r = cli({"setup", "--meta", w.meta_path, "--data", w.data_path, "--out", again, "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  const auto files = j["files"].get<std::vector<std::string>>();
  CHECK(std::find(files.begin(), files.end(), "prompt_db.jsonl") != files.end());
  CHECK(std::find(files.begin(), files.end(), "manifest.json") != files.end());
  CHECK(j["digest"] == directory_digest(w.bundle));
  CHECK(directory_digest(again) == directory_digest(w.bundle));
}

TEST_CASE("setup reports domain errors with 1") {
  const auto& w = world();
  testing_support::TempDir d("clibad");
  write_file(d / "meta.json", R"({"title": "x", "path": "data.csv", "action": "A", "outcome": "A", "columns": []})");
  CHECK(cli({"setup", "--meta", (d / "meta.json").string(), "--data", w.data_path, "--out", (d / "o").string()}).code ==
        1);
}

TEST_CASE("eval on the database itself is exact") {
  const auto r = cli({"eval", "--bundle", world().bundle, "--strategy", "deterministic", "--n", "0", "--format", "json"});
  REQUIRE(r.code == 0);
  const auto rep = json::parse(r.out)["reports"][0];
  CHECK(rep["accuracy"] == 1.0);
  CHECK(rep["extractor_mean"] == 1.0);
}

TEST_CASE("eval defaults to 238 perturbed queries") {
  const auto r = cli({"eval", "--bundle", world().bundle, "--strategy", "deterministic", "--format", "json"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["reports"][0]["n"] == 238);
  const auto md = cli({"eval", "--bundle", world().bundle, "--strategy", "deterministic"});
  CHECK(md.out.find("| deterministic |") != std::string::npos);
  const auto csv = cli({"eval", "--bundle", world().bundle, "--strategy", "deterministic", "--format", "csv"});
  CHECK(csv.out.rfind("strategy,n,correct", 0) == 0);
}

TEST_CASE("ask prints follow-ups, unknowns and charts") {
  const auto opt = cli({"ask", "--bundle", world().bundle, "Can you optimize my strategy?"});
  REQUIRE(opt.code == 0);
  CHECK(json::parse(opt.out)["missing"] == json{"num_rules", "average_budget"});

  const auto hello = cli({"ask", "--bundle", world().bundle, "blorp zinger quux"});
  REQUIRE(hello.code == 0);
  CHECK(json::parse(hello.out)["intent"] == "unknown");

  const auto policy = cli({"ask", "--bundle", world().bundle, "What is the current policy?"});
  REQUIRE(policy.code == 0);
  const auto j = json::parse(policy.out);
  REQUIRE(j["charts"].size() >= 1);
  CHECK(j["charts"][0]["kind"] == "bar");

  const auto two = cli({"ask", "--bundle", world().bundle, "Can you optimize my strategy?", "use 4 rules"});
  REQUIRE(two.code == 0);
  const auto turns = json::parse(two.out);
  REQUIRE(turns.size() == 2);
  CHECK(turns[1]["missing"] == json{"average_budget"});
}

TEST_CASE("demo walkthrough") {
  testing_support::TempDir d("demo");
  const auto r = cli({"demo", "--out", (d / "run").string(), "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  const auto& turns = j["turns"];
  bool asked_rules = false, asked_budget = false;
  for (const auto& t : turns) {
    const auto missing = t["missing"].get<std::vector<std::string>>();
    asked_rules |= std::find(missing.begin(), missing.end(), "num_rules") != missing.end();
    asked_budget |= missing == std::vector<std::string>{"average_budget"};
  }
  CHECK(asked_rules);
  CHECK(asked_budget);
  CHECK(std::filesystem::exists(d / "run" / "transcript.html"));
  CHECK(std::filesystem::exists(d / "run" / "events.jsonl"));

  const auto transcript = json::parse(read_file(d / "run" / "transcript.json"));
  const auto& entries = transcript.at("messages");
  REQUIRE_FALSE(entries.empty());
  const auto& last = entries.back();
  REQUIRE_FALSE(last.at("charts").empty());
  CHECK(last.at("charts").back().at("kind") == "tree");
}
