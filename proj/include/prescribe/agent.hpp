#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "prescribe/chart.hpp"
#include "prescribe/dataset.hpp"
#include "prescribe/llm.hpp"
#include "prescribe/nlu.hpp"
#include "prescribe/tools.hpp"

namespace prescribe {

/// Fixed-size worker pool for tool runs. Workers share the queue state, so
/// the pool may be released from inside one of its own jobs.
class JobExecutor {
 public:
  explicit JobExecutor(std::size_t workers = 2);
  ~JobExecutor();
  JobExecutor(const JobExecutor&) = delete;
  JobExecutor& operator=(const JobExecutor&) = delete;

  void submit(std::function<void()> job);
  /// Blocks until the queue is empty and no job is running.
  void wait_idle();

 private:
  struct State {
    std::mutex mutex;
    std::condition_variable wake;
    std::condition_variable idle;
    std::deque<std::function<void()>> queue;
    std::size_t active = 0;
    bool stop = false;
  };
  static void loop(std::shared_ptr<State> state);

  std::shared_ptr<State> state_ = std::make_shared<State>();
  std::vector<std::thread> threads_;
};

/// Dataset as seen by sessions. Replaced wholesale when columns are toggled.
struct DatasetState {
  DatasetMetadata meta;
  std::shared_ptr<const DataTable> table;
};

class DatasetHandle {
 public:
  explicit DatasetHandle(std::shared_ptr<const DatasetState> state) : state_(std::move(state)) {}
  std::shared_ptr<const DatasetState> get() const;
  void set(std::shared_ptr<const DatasetState> state);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const DatasetState> state_;
};

struct ParameterMemory {
  ValueMap conditions;   // column -> value
  ValueMap tool_params;  // system parameters
  std::map<std::string, std::size_t> provenance;  // key -> query index (0 for manual edits)

  ValueMap snapshot() const;
};

struct Exchange {
  std::string user;  // empty for agent-initiated turns
  std::string agent;
};

/// Last k exchanges.
class ChatMemory {
 public:
  explicit ChatMemory(std::size_t k = 2) : k_(k) {}
  void add(Exchange exchange);
  const std::deque<Exchange>& turns() const noexcept { return turns_; }
  std::size_t k() const noexcept { return k_; }

 private:
  std::size_t k_;
  std::deque<Exchange> turns_;
};

struct Injection {
  enum class Kind { follow_up, present_result, tool_insight };
  Kind kind;
  std::string content;
};

Injection follow_up_injection(const std::vector<std::string>& missing);
Injection present_result_injection(const std::string& rendered);
Injection tool_insight_injection(const ToolSpec& tool, const ValueMap& params = {}, const ValueMap& conditions = {});

/// Numerals in `text` (digits glued to letters, as in "euribor3m", are not
/// numerals). Returned in canonical literal form.
std::vector<std::string> numeric_tokens(std::string_view text);
/// True when every numeral of `reply` occurs among the numerals of `sources`.
bool audit_numbers(std::string_view reply, const std::vector<std::string>& sources);

enum class EventType { agent_message, tool_started, tool_result, conditions_changed, error };
std::string_view to_string(EventType type);

struct SessionEvent {
  EventType type;
  json payload;
  std::uint64_t seq = 0;
};

json to_json(const SessionEvent& event);

struct AgentTurnResult {
  std::string reply;
  std::vector<ChartSpec> charts;
  Intent intent = Intent::unknown;
  std::string tool;
  std::vector<std::string> missing;
  std::optional<std::string> job;
  ValueMap conditions_snapshot;
  ValueMap extracted;
};

json to_json(const AgentTurnResult& result);

struct TranscriptEntry {
  std::string role;  // "user" or "agent"
  std::string text;
  std::vector<ChartSpec> charts;
};

struct SessionConfig {
  std::shared_ptr<DatasetHandle> dataset;
  std::string system_prompt;
  std::shared_ptr<const Strategy> strategy;
  /// Used when `strategy` fails (provider errors); may equal `strategy`.
  std::shared_ptr<const Strategy> fallback_strategy;
  std::vector<ExtractorSpec> specs;
  std::shared_ptr<Provider> provider;
  std::shared_ptr<JobExecutor> executor;  // null runs tools inline
  std::size_t chat_k = 2;
  std::uint64_t seed = 0;
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(std::string id, SessionConfig config);

  const std::string& id() const noexcept { return id_; }

  AgentTurnResult handle_query(std::string_view query);

  ValueMap set_condition(const std::string& name, const Value& value);
  ValueMap remove_condition(const std::string& name);
  ValueMap clear_conditions();
  ValueMap conditions_snapshot() const;

  std::vector<std::string> sample_questions() const;

  std::vector<SessionEvent> events_since(std::uint64_t after) const;
  /// Waits until an event with seq > after exists or the timeout passes.
  bool wait_for_events(std::uint64_t after, std::chrono::milliseconds timeout) const;
  std::vector<TranscriptEntry> transcript() const;
  std::deque<Exchange> chat_history() const;

  /// Prompt for one completion: system prompt, the last k exchanges, the
  /// current user text (if any) and the injection (if any).
  std::vector<ChatMessage> build_prompt(std::string_view user, const std::optional<Injection>& injection) const;

  /// Blocks until this session's background jobs are done.
  void wait_idle();

 private:
  std::string reply_with(std::string_view user, const std::optional<Injection>& injection,
                         const std::string& fallback, std::string& audit);
  void emit(EventType type, json payload);
  void run_job(const std::string& job_id, const ToolSpec& tool, ValueMap params, ValueMap conditions);
  std::string fallback_text(const std::optional<Injection>& injection, const ToolSpec* tool) const;

  std::string id_;
  SessionConfig config_;
  mutable std::mutex mutex_;
  mutable std::condition_variable events_cv_;
  ParameterMemory memory_;
  ChatMemory chat_;
  std::vector<SessionEvent> events_;
  std::vector<TranscriptEntry> transcript_;
  std::uint64_t next_seq_ = 1;
  std::size_t query_index_ = 0;
  std::size_t job_counter_ = 0;
  std::size_t running_jobs_ = 0;
  std::condition_variable jobs_cv_;
  const ToolSpec* pending_ = nullptr;
  std::string last_tool_;
  json last_details_;
  ValueMap last_params_;
};

std::string transcript_html(const Session& session, const std::string& title);
json transcript_json(const Session& session);

}  // namespace prescribe
