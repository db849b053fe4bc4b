#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace prescribe {

enum class Role { system, user, agent, injected_system };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

/// Throws Errc::precondition: empty list, first message not system, empty
/// user/agent content, or an injected_system message before the end.
void validate_messages(const std::vector<ChatMessage>& messages);

struct CompletionOptions {
  double temperature = 0.2;
  int max_tokens = 256;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) = 0;
};

/// Rule-driven mock. Each rule fires when `match` is a substring of the final
/// message; an empty match is a catch-all. Rules marked `once` are consumed.
/// "{{result}}" in a response is replaced by the result embedded in a
/// present-result injection.
class ScriptedProvider : public Provider {
 public:
  struct Rule {
    std::string match;
    std::string respond;
    bool once = false;
  };

  explicit ScriptedProvider(std::vector<Rule> rules);
  static std::shared_ptr<ScriptedProvider> from_jsonl(std::string_view text);
  static std::shared_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

  std::string name() const override { return "scripted"; }
  std::string complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override;

  /// Every message list passed to complete(), in call order.
  std::vector<std::vector<ChatMessage>> calls() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Rule> rules_;
  std::vector<bool> consumed_;
  std::vector<std::vector<ChatMessage>> calls_;
};

class EchoProvider : public Provider {
 public:
  std::string name() const override { return "echo"; }
  std::string complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override;
};

/// OpenAI-style chat completion over plain HTTP. Endpoint, path, model and
/// API key come from the environment (PRESCRIBE_LLM_ENDPOINT,
/// PRESCRIBE_LLM_PATH, PRESCRIBE_LLM_MODEL, PRESCRIBE_LLM_API_KEY).
class HttpProvider : public Provider {
 public:
  struct Settings {
    std::string endpoint;  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
  };

  explicit HttpProvider(Settings settings, int max_in_flight = 4);
  static Settings settings_from_env();

  std::string name() const override { return "http"; }
  std::string complete(const std::vector<ChatMessage>& messages, const CompletionOptions& options) override;

 private:
  Settings settings_;
  std::counting_semaphore<64> in_flight_;
};

struct ProviderConfig {
  enum class Kind { scripted, http, echo };
  Kind kind = Kind::echo;
  std::filesystem::path script;
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 4;
};

std::optional<ProviderConfig::Kind> parse_provider_kind(std::string_view name);
std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

}  // namespace prescribe
