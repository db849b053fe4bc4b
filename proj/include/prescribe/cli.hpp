#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "prescribe/agent.hpp"
#include "prescribe/genpipeline.hpp"

namespace prescribe {

/// Exit codes: 0 success, 1 domain error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Session over a loaded bundle. A null executor runs tools inline.
std::shared_ptr<Session> make_session(const LoadedBundle& bundle, std::shared_ptr<const DataTable> table,
                                      std::shared_ptr<Provider> provider, const std::string& strategy,
                                      std::shared_ptr<JobExecutor> executor, const std::string& id = "cli");

const std::vector<std::string>& demo_queries();

struct DemoTurn {
  std::string query;
  AgentTurnResult result;
  ValueMap conditions_after;  // snapshot once the turn's job finished
  std::vector<SessionEvent> events;  // emitted by this turn, job included
};

struct DemoRun {
  SetupBundle bundle;
  std::vector<DemoTurn> turns;
  std::vector<SessionEvent> events;
  std::filesystem::path transcript_html;
  std::shared_ptr<Session> session;
  std::shared_ptr<ScriptedProvider> provider;
};

/// Writes the bank fixture, builds a bundle, and plays the walkthrough
/// against the scripted provider. Everything lands under `out`.
DemoRun run_demo(const std::filesystem::path& out, std::uint64_t seed = 0);

}  // namespace prescribe
