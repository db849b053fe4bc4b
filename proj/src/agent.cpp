#include "prescribe/agent.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include "prescribe/error.hpp"

namespace prescribe {

// ---------------------------------------------------------------------------
// JobExecutor

JobExecutor::JobExecutor(std::size_t workers) {
  for (std::size_t i = 0; i < std::max<std::size_t>(1, workers); ++i) threads_.emplace_back(loop, state_);
}

JobExecutor::~JobExecutor() {
  {
    std::lock_guard lock(state_->mutex);
    state_->stop = true;
  }
  state_->wake.notify_all();
  for (auto& t : threads_) {
    if (t.get_id() == std::this_thread::get_id()) t.detach();
    else t.join();
  }
}

void JobExecutor::submit(std::function<void()> job) {
  {
    std::lock_guard lock(state_->mutex);
    state_->queue.push_back(std::move(job));
  }
  state_->wake.notify_one();
}

void JobExecutor::wait_idle() {
  std::unique_lock lock(state_->mutex);
  state_->idle.wait(lock, [this] { return state_->queue.empty() && state_->active == 0; });
}

void JobExecutor::loop(std::shared_ptr<State> state) {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(state->mutex);
      state->wake.wait(lock, [&] { return state->stop || !state->queue.empty(); });
      if (state->queue.empty()) return;
      job = std::move(state->queue.front());
      state->queue.pop_front();
      ++state->active;
    }
    job();
    // Captures may own the pool; drop them before touching shared state.
    job = nullptr;
    {
      std::lock_guard lock(state->mutex);
      --state->active;
      if (state->queue.empty() && state->active == 0) state->idle.notify_all();
    }
  }
}

std::shared_ptr<const DatasetState> DatasetHandle::get() const {
  std::lock_guard lock(mutex_);
  return state_;
}

void DatasetHandle::set(std::shared_ptr<const DatasetState> state) {
  std::lock_guard lock(mutex_);
  state_ = std::move(state);
}

// ---------------------------------------------------------------------------
// Memories and injections

ValueMap ParameterMemory::snapshot() const {
  ValueMap out = conditions;
  for (const auto& [k, v] : tool_params) out[k] = v;
  return out;
}

void ChatMemory::add(Exchange exchange) {
  turns_.push_back(std::move(exchange));
  while (turns_.size() > k_) turns_.pop_front();
}

Injection follow_up_injection(const std::vector<std::string>& missing) {
  std::string list;
  for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
  return {Injection::Kind::follow_up,
          "Respond to the users query but ask to provide the following missing parameters: [" + list + "]"};
}

Injection present_result_injection(const std::string& rendered) {
  return {Injection::Kind::present_result,
          "Simply respond to the user that the result is " + rendered +
              ". Say nothing else and do not make up anything."};
}

Injection tool_insight_injection(const ToolSpec& tool, const ValueMap& params, const ValueMap& conditions) {
  std::string content = "Inform the user you are running a tool that does " + tool.description;
  std::string args;
  for (const auto& [k, v] : conditions) args += (args.empty() ? "" : ", ") + k + " = " + render_literal(v);
  for (const auto& p : tool.params) {
    auto it = params.find(p.name);
    if (it != params.end()) args += (args.empty() ? "" : ", ") + p.name + " = " + render_literal(it->second);
  }
  if (!args.empty()) content += " Parameters: " + args + ".";
  return {Injection::Kind::tool_insight, content};
}

std::vector<std::string> numeric_tokens(std::string_view text) {
  std::vector<std::string> out;
  auto alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::size_t i = 0;
  while (i < text.size()) {
    if (!digit(text[i])) {
      ++i;
      continue;
    }
    const bool glued_before = i > 0 && alpha(text[i - 1]);
    std::size_t j = i;
    while (j < text.size() && digit(text[j])) ++j;
    if (j + 1 < text.size() && text[j] == '.' && digit(text[j + 1])) {
      ++j;
      while (j < text.size() && digit(text[j])) ++j;
    }
    const bool glued_after = j < text.size() && alpha(text[j]);
    if (glued_before || glued_after) {
      while (j < text.size() && (alpha(text[j]) || digit(text[j]))) ++j;
    } else if (auto d = parse_number(text.substr(i, j - i))) {
      out.push_back(render_number(*d));
    }
    i = j;
  }
  return out;
}

bool audit_numbers(std::string_view reply, const std::vector<std::string>& sources) {
  std::set<std::string> allowed;
  for (const auto& s : sources)
    for (auto& n : numeric_tokens(s)) allowed.insert(std::move(n));
  for (const auto& n : numeric_tokens(reply))
    if (!allowed.contains(n)) return false;
  return true;
}

std::string_view to_string(EventType type) {
  switch (type) {
    case EventType::agent_message: return "agent_message";
    case EventType::tool_started: return "tool_started";
    case EventType::tool_result: return "tool_result";
    case EventType::conditions_changed: return "conditions_changed";
    case EventType::error: return "error";
  }
  return "error";
}

json to_json(const SessionEvent& event) {
  return {{"type", std::string(to_string(event.type))}, {"seq", event.seq}, {"payload", event.payload}};
}

json to_json(const AgentTurnResult& r) {
  json charts = json::array();
  for (const auto& c : r.charts) charts.push_back(to_json(c));
  return {{"reply", r.reply},
          {"intent", std::string(to_string(r.intent))},
          {"tool", r.tool.empty() ? json(nullptr) : json(r.tool)},
          {"missing", r.missing},
          {"job", r.job ? json(*r.job) : json(nullptr)},
          {"conditions", to_json(r.conditions_snapshot)},
          {"extracted", to_json(r.extracted)},
          {"charts", charts}};
}

// ---------------------------------------------------------------------------
// Session

Session::Session(std::string id, SessionConfig config)
    : id_(std::move(id)), config_(std::move(config)), chat_(config_.chat_k) {
  if (!config_.dataset || !config_.dataset->get()) throw Error(Errc::precondition, "session needs a dataset");
  if (!config_.strategy) throw Error(Errc::precondition, "session needs an NLU strategy");
  if (!config_.fallback_strategy) config_.fallback_strategy = config_.strategy;
  if (!config_.provider) throw Error(Errc::precondition, "session needs a provider");
}

void Session::emit(EventType type, json payload) {
  // Caller holds mutex_.
  events_.push_back({type, std::move(payload), next_seq_++});
  events_cv_.notify_all();
}

std::vector<ChatMessage> Session::build_prompt(std::string_view user, const std::optional<Injection>& injection) const {
  std::vector<ChatMessage> messages{{Role::system, config_.system_prompt}};
  for (const auto& ex : chat_.turns()) {
    if (!ex.user.empty()) messages.push_back({Role::user, ex.user});
    if (!ex.agent.empty()) messages.push_back({Role::agent, ex.agent});
  }
  if (!user.empty()) messages.push_back({Role::user, std::string(user)});
  if (injection) messages.push_back({Role::injected_system, injection->content});
  return messages;
}

std::string Session::fallback_text(const std::optional<Injection>& injection, const ToolSpec* tool) const {
  const auto state = config_.dataset->get();
  if (!injection) {
    return "I can help you analyse the " + state->meta.title + " data: select the important features, show how " +
           state->meta.action_column + " affects " + state->meta.outcome_column +
           ", explore what-if conditions, show the current policy, and optimize the policy under a budget.";
  }
  switch (injection->kind) {
    case Injection::Kind::follow_up: {
      const auto open = injection->content.find('[');
      return "Happy to help! Please provide the following missing parameters: " + injection->content.substr(open);
    }
    case Injection::Kind::present_result: {
      const std::string_view marker = "the result is ";
      const auto start = injection->content.find(marker) + marker.size();
      const auto end = injection->content.rfind(". Say nothing else");
      return "The result is " + injection->content.substr(start, end - start) + ".";
    }
    case Injection::Kind::tool_insight:
      return "Working on it! I'm running " + (tool ? tool->name : std::string("a tool")) + ": " +
             (tool ? tool->description : std::string());
  }
  return {};
}

std::string Session::reply_with(std::string_view user, const std::optional<Injection>& injection,
                                const std::string& fallback, std::string& audit) {
  // Caller must not hold mutex_ for the provider call; prompt is built under it.
  std::vector<ChatMessage> prompt;
  {
    std::lock_guard lock(mutex_);
    prompt = build_prompt(user, injection);
  }
  std::string reply;
  try {
    reply = config_.provider->complete(prompt, CompletionOptions{});
  } catch (const Error&) {
    audit = "provider_error";
    return fallback;
  }
  std::vector<std::string> sources{std::string(user)};
  if (injection) sources.push_back(injection->content);
  if (trim(reply).empty()) {
    audit = "empty";
    return fallback;
  }
  if (!audit_numbers(reply, sources)) {
    audit = "fallback";
    return fallback;
  }
  audit = "passed";
  return reply;
}

AgentTurnResult Session::handle_query(std::string_view query_view) {
  const std::string query(query_view);
  const auto state = config_.dataset->get();
  AgentTurnResult result;
  std::size_t index;
  {
    std::lock_guard lock(mutex_);
    index = ++query_index_;
    transcript_.push_back({"user", query, {}});
  }

  // Intent and extraction run side by side.
  Intent intent = Intent::unknown;
  Extraction extraction;
  try {
    auto intent_future = std::async(std::launch::async, [&] { return classify_intent(query, *config_.strategy); });
    extraction = extract_all(query, config_.specs, *config_.strategy);
    intent = intent_future.get();
    if (!extraction.errors.empty()) throw Error(Errc::provider_unavailable, extraction.errors.front());
  } catch (const Error& e) {
    {
      std::lock_guard lock(mutex_);
      emit(EventType::error, {{"message", std::string("NLU provider failed, using the offline matcher: ") + e.what()}});
    }
    intent = classify_intent(query, *config_.fallback_strategy);
    extraction = extract_all(query, config_.specs, *config_.fallback_strategy);
  }
  result.intent = intent;
  result.extracted = extraction.present();

  const auto covariates = state->meta.covariates();
  const auto system = system_params();
  const ToolSpec* tool = nullptr;
  ValueMap params, conditions;
  {
    std::lock_guard lock(mutex_);
    bool changed = false;
    for (const auto& [name, value] : result.extracted) {
      const bool is_system = std::any_of(system.begin(), system.end(), [&](const ParamSpec& p) { return p.name == name; });
      const bool is_column = std::find(covariates.begin(), covariates.end(), name) != covariates.end();
      if (!is_system && !is_column) continue;
      auto& target = is_system ? memory_.tool_params : memory_.conditions;
      auto it = target.find(name);
      if (it == target.end() || render_literal(it->second) != render_literal(value)) changed = true;
      target[name] = value;
      memory_.provenance[name] = index;
    }
    if (changed) emit(EventType::conditions_changed, {{"conditions", to_json(memory_.snapshot())}});

    if (intent != Intent::unknown) tool = lookup(to_string(intent));
    if (pending_ && (!tool || tool == pending_) && (tool || !result.extracted.empty())) tool = pending_;
    if (tool) {
      result.intent = parse_intent(tool->name);
      for (const auto& p : tool->params)
        if (auto it = memory_.tool_params.find(p.name); it != memory_.tool_params.end()) params[p.name] = it->second;
      conditions = memory_.conditions;
      result.missing = missing_params(*tool, params, conditions);
      pending_ = result.missing.empty() ? nullptr : tool;
    }
    result.conditions_snapshot = memory_.snapshot();
  }

  std::string audit;
  std::optional<Injection> injection;
  if (!tool) {
    result.reply = reply_with(query, std::nullopt, fallback_text(std::nullopt, nullptr), audit);
  } else if (!result.missing.empty()) {
    result.tool = tool->name;
    injection = follow_up_injection(result.missing);
    result.reply = reply_with(query, injection, fallback_text(injection, tool), audit);
  } else {
    result.tool = tool->name;
    injection = tool_insight_injection(*tool, params, tool->name == "counterfactual" ? conditions : ValueMap{});
    std::string job_id;
    {
      std::lock_guard lock(mutex_);
      job_id = "job-" + std::to_string(++job_counter_);
      json p = json::object();
      for (const auto& [k, v] : params) p[k] = to_json(v);
      emit(EventType::tool_started, {{"job", job_id}, {"tool", tool->name}, {"params", p}, {"conditions", to_json(conditions)}});
    }
    result.job = job_id;
    result.reply = reply_with(query, injection, fallback_text(injection, tool), audit);
  }

  {
    std::lock_guard lock(mutex_);
    chat_.add({query, result.reply});
    transcript_.push_back({"agent", result.reply, {}});
    json payload = {{"text", result.reply}, {"intent", std::string(to_string(result.intent))}, {"audit", audit}};
    if (!result.missing.empty()) payload["missing"] = result.missing;
    if (result.job) payload["job"] = *result.job;
    if (injection) payload["injection"] = injection->content;
    emit(EventType::agent_message, payload);
    if (result.job) ++running_jobs_;
  }

  if (result.job) {
    auto self = shared_from_this();
    auto job = [self, id = *result.job, tool, params, conditions] { self->run_job(id, *tool, params, conditions); };
    if (config_.executor) config_.executor->submit(std::move(job));
    else job();
  }
  return result;
}

void Session::run_job(const std::string& job_id, const ToolSpec& tool, ValueMap params, ValueMap conditions) {
  const auto state = config_.dataset->get();
  ToolContext ctx;
  ctx.table = state->table.get();
  ctx.meta = &state->meta;
  ctx.features = state->meta.covariates();
  ctx.seed = config_.seed;
  try {
    const auto tool_result = execute(tool, params, conditions, ctx);
    const auto rendered = render_scalars(tool_result, state->meta);
    const auto injection = present_result_injection(rendered);
    std::string audit;
    const auto reply = reply_with("", injection, fallback_text(injection, &tool), audit);
    std::lock_guard lock(mutex_);
    emit(EventType::tool_result, {{"job", job_id}, {"tool", tool.name}, {"result", to_json(tool_result, state->meta)}});
    emit(EventType::agent_message, {{"text", reply}, {"job", job_id}, {"audit", audit}, {"injection", injection.content}});
    chat_.add({"", reply});
    transcript_.push_back({"agent", reply, tool_result.charts});
    last_tool_ = tool.name;
    last_details_ = tool_result.details;
    last_params_ = params;
  } catch (const std::exception& e) {
    const std::string message = std::string("The ") + tool.name + " tool failed: " + e.what();
    std::lock_guard lock(mutex_);
    emit(EventType::error, {{"job", job_id}, {"tool", tool.name}, {"message", message}});
    transcript_.push_back({"agent", message, {}});
    chat_.add({"", message});
  }
  std::lock_guard lock(mutex_);
  --running_jobs_;
  jobs_cv_.notify_all();
}

void Session::wait_idle() {
  std::unique_lock lock(mutex_);
  jobs_cv_.wait(lock, [this] { return running_jobs_ == 0; });
}

ValueMap Session::set_condition(const std::string& name, const Value& value) {
  const auto state = config_.dataset->get();
  const auto system = system_params();
  std::lock_guard lock(mutex_);
  auto sys = std::find_if(system.begin(), system.end(), [&](const ParamSpec& p) { return p.name == name; });
  if (sys != system.end()) {
    auto typed = coerce(value, sys->dtype);
    if (!typed || (sys->integer && (std::get<double>(*typed) != std::floor(std::get<double>(*typed)) ||
                                    std::get<double>(*typed) < 1)))
      throw Error(Errc::bad_param_type, name);
    memory_.tool_params[name] = *typed;
  } else {
    const auto covariates = state->meta.covariates();
    if (std::find(covariates.begin(), covariates.end(), name) == covariates.end())
      throw Error(Errc::unknown_column, name);
    auto typed = coerce(value, state->meta.column(name).dtype);
    if (!typed) throw Error(Errc::bad_param_type, name);
    memory_.conditions[name] = *typed;
  }
  memory_.provenance[name] = 0;
  const auto snap = memory_.snapshot();
  emit(EventType::conditions_changed, {{"conditions", to_json(snap)}});
  return snap;
}

ValueMap Session::remove_condition(const std::string& name) {
  std::lock_guard lock(mutex_);
  const bool removed = memory_.conditions.erase(name) + memory_.tool_params.erase(name) > 0;
  memory_.provenance.erase(name);
  const auto snap = memory_.snapshot();
  if (removed) emit(EventType::conditions_changed, {{"conditions", to_json(snap)}});
  return snap;
}

ValueMap Session::clear_conditions() {
  std::lock_guard lock(mutex_);
  const bool any = !memory_.conditions.empty() || !memory_.tool_params.empty();
  memory_ = ParameterMemory{};
  if (any) emit(EventType::conditions_changed, {{"conditions", json::object()}});
  return {};
}

ValueMap Session::conditions_snapshot() const {
  std::lock_guard lock(mutex_);
  return memory_.snapshot();
}

std::vector<std::string> Session::sample_questions() const {
  const auto state = config_.dataset->get();
  const auto& meta = state->meta;
  const auto& action = meta.action_column;
  const auto& outcome = meta.outcome_column;

  // A domain-grounded budget: the mean cost of the historical policy.
  std::string budget = "1";
  try {
    const auto levels = ActionLevels::fit(*state->table, meta);
    const auto costs = action_costs(levels, meta);
    const auto assigned = levels.assign(*state->table, meta.action_column);
    double total = 0.0;
    std::size_t n = 0;
    for (int l : assigned) {
      if (l < 0) continue;
      total += costs[static_cast<std::size_t>(l)];
      ++n;
    }
    if (n) budget = render_number(std::round(total / static_cast<double>(n) * 10.0) / 10.0);
  } catch (const Error&) {
  }

  std::lock_guard lock(mutex_);
  if (pending_) {
    std::vector<std::string> out;
    for (const auto& p : missing_params(*pending_, memory_.tool_params, memory_.conditions)) {
      if (p == "num_rules") out.push_back("Use 4 rules");
      if (p == "average_budget") out.push_back("Set the average budget to " + budget);
    }
    if (out.size() < 2) out.push_back("What is the current policy?");
    if (out.size() < 2) out.push_back("How does " + action + " affect " + outcome + "?");
    return out;
  }
  if (last_tool_ == "show_current_policy")
    return {"How does " + action + " affect " + outcome + "?",
            "Optimize " + action + " with 4 rules and an average budget of " + budget};
  if (last_tool_ == "select_features") {
    std::string top;
    if (last_details_.contains("ranked_features") && !last_details_["ranked_features"].empty())
      top = last_details_["ranked_features"][0].value("feature", "");
    if (!top.empty() && state->table->has_column(top)) {
      const auto values = distinct_values(*state->table, top, 1);
      if (!values.empty())
        return {"What if " + top + " is " + render_literal(values.front()) + "?", "What is the current policy?"};
    }
    return {"How does " + action + " affect " + outcome + "?", "What is the current policy?"};
  }
  if (last_tool_ == "run_optimize") {
    double b = 0.0;
    if (auto it = last_params_.find("average_budget"); it != last_params_.end()) b = std::get<double>(it->second);
    return {"Set the average budget to " + render_number(std::round(b * 12.0) / 10.0),
            "Set the average budget to " + render_number(std::round(b * 8.0) / 10.0), "What is the current policy?"};
  }
  if (last_tool_ == "show_causal_effect" || last_tool_ == "counterfactual")
    return {"What is the current policy?", "Can you optimize my strategy?"};
  return {"What can you do?", "What is the current policy?", "What are the most important features?"};
}

std::vector<SessionEvent> Session::events_since(std::uint64_t after) const {
  std::lock_guard lock(mutex_);
  std::vector<SessionEvent> out;
  for (const auto& e : events_)
    if (e.seq > after) out.push_back(e);
  return out;
}

bool Session::wait_for_events(std::uint64_t after, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return events_cv_.wait_for(lock, timeout, [&] { return !events_.empty() && events_.back().seq > after; });
}

std::vector<TranscriptEntry> Session::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

std::deque<Exchange> Session::chat_history() const {
  std::lock_guard lock(mutex_);
  return chat_.turns();
}

// ---------------------------------------------------------------------------
// Transcript export

std::string transcript_html(const Session& session, const std::string& title) {
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" + html_escape(title) +
      "</title>\n<style>body{font-family:sans-serif;max-width:860px;margin:2em auto}"
      ".msg{margin:.6em 0;padding:.6em .9em;border-radius:8px}"
      ".user{background:#dbeafe;margin-left:25%;text-align:right}"
      ".agent{background:#f3f4f6;margin-right:25%}.chart{margin:.5em 0}</style></head><body>\n<h1>" +
      html_escape(title) + "</h1>\n";
  for (const auto& entry : session.transcript()) {
    html += "<div class=\"msg " + entry.role + "\"><b>" + (entry.role == "user" ? "You" : "Agent") + ":</b> " +
            html_escape(entry.text);
    for (const auto& chart : entry.charts) html += "\n<div class=\"chart\">" + render_html(chart) + "</div>";
    html += "</div>\n";
  }
  html += "</body></html>\n";
  return html;
}

json transcript_json(const Session& session) {
  json entries = json::array();
  for (const auto& entry : session.transcript()) {
    json charts = json::array();
    for (const auto& c : entry.charts) charts.push_back(to_json(c));
    entries.push_back({{"role", entry.role}, {"text", entry.text}, {"charts", charts}});
  }
  json events = json::array();
  for (const auto& e : session.events_since(0)) events.push_back(to_json(e));
  return {{"session", session.id()}, {"messages", entries}, {"events", events}};
}

}  // namespace prescribe
