#include "prescribe/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "prescribe/dataset.hpp"
#include "prescribe/error.hpp"

namespace prescribe {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::agent: return "agent";
    case Role::injected_system: return "injected_system";
  }
  return "system";
}

void validate_messages(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw Error(Errc::precondition, "empty message list");
  if (messages.front().role != Role::system) throw Error(Errc::precondition, "first message must be a system message");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    if ((m.role == Role::user || m.role == Role::agent) && m.content.empty())
      throw Error(Errc::precondition, "empty " + std::string(to_string(m.role)) + " message");
    if (m.role == Role::injected_system && i + 1 != messages.size())
      throw Error(Errc::precondition, "injected system message must come last");
  }
}

// ---------------------------------------------------------------------------

ScriptedProvider::ScriptedProvider(std::vector<Rule> rules)
    : rules_(std::move(rules)), consumed_(rules_.size(), false) {}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_jsonl(std::string_view text) {
  std::vector<Rule> rules;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("respond") || !j["respond"].is_string())
      throw Error(Errc::precondition, "bad script line: " + line);
    Rule r;
    r.match = j.value("match", "");
    r.respond = j["respond"].get<std::string>();
    r.once = j.value("once", false);
    rules.push_back(std::move(r));
  }
  return std::make_shared<ScriptedProvider>(std::move(rules));
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::filesystem::path& path) {
  return from_jsonl(read_file(path));
}

namespace {

std::string embedded_result(const std::string& content) {
  static constexpr std::string_view kOpen = "the result is ";
  static constexpr std::string_view kClose = ". Say nothing else";
  const auto begin = content.find(kOpen);
  if (begin == std::string::npos) return {};
  const auto start = begin + kOpen.size();
  const auto end = content.find(kClose, start);
  return content.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

}  // namespace

std::string ScriptedProvider::complete(const std::vector<ChatMessage>& messages, const CompletionOptions&) {
  validate_messages(messages);
  std::lock_guard lock(mutex_);
  calls_.push_back(messages);
  const auto& last = messages.back().content;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (consumed_[i]) continue;
    const auto& rule = rules_[i];
    if (!rule.match.empty() && last.find(rule.match) == std::string::npos) continue;
    if (rule.once) consumed_[i] = true;
    std::string reply = rule.respond;
    if (const auto pos = reply.find("{{result}}"); pos != std::string::npos)
      reply.replace(pos, 10, embedded_result(last));
    return reply;
  }
  throw Error(Errc::script_exhausted, "no script rule matches: " + last.substr(0, 80));
}

std::vector<std::vector<ChatMessage>> ScriptedProvider::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string EchoProvider::complete(const std::vector<ChatMessage>& messages, const CompletionOptions&) {
  validate_messages(messages);
  return messages.back().content;
}

// ---------------------------------------------------------------------------

HttpProvider::HttpProvider(Settings settings, int max_in_flight)
    : settings_(std::move(settings)), in_flight_(std::clamp(max_in_flight, 1, 64)) {}

HttpProvider::Settings HttpProvider::settings_from_env() {
  Settings s;
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  s.endpoint = env("PRESCRIBE_LLM_ENDPOINT");
  if (auto path = env("PRESCRIBE_LLM_PATH"); !path.empty()) s.path = path;
  s.model = env("PRESCRIBE_LLM_MODEL");
  s.api_key = env("PRESCRIBE_LLM_API_KEY");
  return s;
}

std::string HttpProvider::complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) {
  validate_messages(messages);
  if (settings_.endpoint.empty()) throw Error(Errc::provider_unavailable, "PRESCRIBE_LLM_ENDPOINT is not set");

  nlohmann::json body;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    const char* role = m.role == Role::user ? "user" : m.role == Role::agent ? "assistant" : "system";
    body["messages"].push_back({{"role", role}, {"content", m.content}});
  }
  body["max_tokens"] = options.max_tokens;
  body["temperature"] = options.temperature;
  if (!settings_.model.empty()) body["model"] = settings_.model;

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<64>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  httplib::Client client(settings_.endpoint);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(settings_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(settings_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

  auto res = client.Post(settings_.path, headers, body.dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
        res.error() == httplib::Error::ConnectionTimeout)
      throw Error(Errc::timeout, "no response from " + settings_.endpoint);
    throw Error(Errc::provider_unavailable, "cannot reach " + settings_.endpoint + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) throw HttpError(res->status, "completion request failed with status " + std::to_string(res->status));
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw Error(Errc::malformed_completion, "response is not JSON");
  try {
    const auto& choice = reply.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::malformed_completion, "response has no completion text");
  }
}

// ---------------------------------------------------------------------------

std::optional<ProviderConfig::Kind> parse_provider_kind(std::string_view name) {
  if (name == "scripted") return ProviderConfig::Kind::scripted;
  if (name == "http") return ProviderConfig::Kind::http;
  if (name == "echo") return ProviderConfig::Kind::echo;
  return std::nullopt;
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  if (config.timeout.count() <= 0) throw Error(Errc::precondition, "provider timeout must be positive");
  switch (config.kind) {
    case ProviderConfig::Kind::scripted:
      if (config.script.empty()) throw Error(Errc::precondition, "scripted provider needs a script");
      return ScriptedProvider::from_file(config.script);
    case ProviderConfig::Kind::http: {
      auto settings = HttpProvider::settings_from_env();
      settings.timeout = config.timeout;
      return std::make_shared<HttpProvider>(std::move(settings), config.max_in_flight);
    }
    case ProviderConfig::Kind::echo:
      return std::make_shared<EchoProvider>();
  }
  return std::make_shared<EchoProvider>();
}

}  // namespace prescribe
