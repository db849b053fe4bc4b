#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "prescribe/agent.hpp"
#include "prescribe/genpipeline.hpp"

namespace prescribe {

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lowercase names
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  json json_body() const { return json::parse(body); }
};

struct ServerConfig {
  std::shared_ptr<DatasetHandle> dataset;  // null: session creation answers 503
  std::string system_prompt;
  std::vector<PromptSample> db;
  std::vector<ExtractorSpec> specs;
  std::string strategy = "deterministic";  // or "fewshot"
  std::shared_ptr<Provider> provider;
  std::filesystem::path static_dir;
  std::size_t workers = 2;
  std::uint64_t seed = 0;
  std::string title = "Prescriptive analytics chat";
};

/// Dataset handle for a loaded bundle and its table.
ServerConfig server_config(const LoadedBundle& bundle, std::shared_ptr<const DataTable> table,
                           std::shared_ptr<Provider> provider, const std::string& strategy = "deterministic");

/// SSE frame for one event.
std::string sse_frame(const SessionEvent& event);

class ApiServer {
 public:
  explicit ApiServer(ServerConfig config);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Routes one request without any socket. The event stream endpoint
  /// answers with the backlog after Last-Event-ID and returns.
  ApiResponse handle(const ApiRequest& request);

  std::shared_ptr<Session> session(const std::string& id) const;

  /// Binds (port 0 picks a free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Event streams stay open and push live.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prescribe
