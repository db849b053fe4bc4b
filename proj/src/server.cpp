#include "prescribe/server.hpp"

#include <atomic>
#include <random>
#include <regex>

#include <httplib.h>

#include "prescribe/error.hpp"

namespace prescribe {

namespace {

ApiResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}, {"status", status}});
}

int status_for(Errc code) {
  switch (code) {
    case Errc::unknown_column:
    case Errc::unknown_tool:
      return 404;
    case Errc::bad_param_type:
    case Errc::missing_param:
    case Errc::unknown_dtype:
    case Errc::precondition:
      return 422;
    case Errc::unsupported_format:
      return 400;
    default:
      return 500;
  }
}

std::string new_uuid() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  const std::uint64_t hi = (rng() & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
  const std::uint64_t lo = (rng() & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%08llx-%04llx-%04llx-%04llx-%012llx", static_cast<unsigned long long>(hi >> 32),
                static_cast<unsigned long long>((hi >> 16) & 0xffff), static_cast<unsigned long long>(hi & 0xffff),
                static_cast<unsigned long long>(lo >> 48), static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const auto j = path.find('/', i);
    const auto part = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
    if (!part.empty()) out.push_back(httplib::detail::decode_url(part, false));
    if (j == std::string::npos) break;
    i = j;
  }
  return out;
}

}  // namespace

std::string sse_frame(const SessionEvent& event) {
  return "id: " + std::to_string(event.seq) + "\nevent: " + std::string(to_string(event.type)) +
         "\ndata: " + to_json(event).dump() + "\n\n";
}

ServerConfig server_config(const LoadedBundle& bundle, std::shared_ptr<const DataTable> table,
                           std::shared_ptr<Provider> provider, const std::string& strategy) {
  ServerConfig config;
  auto state = std::make_shared<DatasetState>();
  state->meta = bundle.meta;
  state->table = std::move(table);
  config.dataset = std::make_shared<DatasetHandle>(state);
  config.system_prompt = bundle.system_prompt;
  config.db = bundle.db;
  config.specs = bundle.specs;
  config.strategy = strategy;
  config.provider = std::move(provider);
  config.seed = bundle.seed;
  config.title = bundle.meta.title;
  return config;
}

struct ApiServer::Impl {
  ServerConfig config;
  std::shared_ptr<JobExecutor> executor;
  std::shared_ptr<const Strategy> strategy;
  std::shared_ptr<const Strategy> fallback;

  struct Entry {
    std::shared_ptr<Session> session;
    std::shared_ptr<std::mutex> turn;  // serialises message handling
  };
  mutable std::mutex sessions_mutex;
  std::map<std::string, Entry> sessions;

  httplib::Server http;
  std::atomic<bool> stopping{false};

  explicit Impl(ServerConfig c) : config(std::move(c)) {
    executor = std::make_shared<JobExecutor>(config.workers);
    if (!config.provider) config.provider = std::make_shared<EchoProvider>();
    if (config.dataset) {
      const auto state = config.dataset->get();
      fallback = std::make_shared<DeterministicStrategy>(config.db, state->meta, *state->table);
      if (config.strategy == "fewshot")
        strategy = std::make_shared<FewShotStrategy>(config.db, config.provider, config.specs,
                                                     FewShotStrategy::kDefaultExamples, config.seed);
      else if (config.strategy == "deterministic")
        strategy = fallback;
      else
        throw Error(Errc::precondition, "unknown strategy " + config.strategy);
    }
  }

  std::optional<Entry> find(const std::string& id) const {
    std::lock_guard lock(sessions_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) return std::nullopt;
    return it->second;
  }

  ApiResponse create_session() {
    if (!config.dataset) return error_response(503, "no dataset loaded");
    SessionConfig sc;
    sc.dataset = config.dataset;
    sc.system_prompt = config.system_prompt;
    sc.strategy = strategy;
    sc.fallback_strategy = fallback;
    sc.specs = config.specs;
    sc.provider = config.provider;
    sc.executor = executor;
    sc.seed = config.seed;
    const auto id = new_uuid();
    auto session = std::make_shared<Session>(id, std::move(sc));
    {
      std::lock_guard lock(sessions_mutex);
      sessions[id] = {session, std::make_shared<std::mutex>()};
    }
    return json_response(200, {{"session_id", id}});
  }

  ApiResponse post_message(const Entry& entry, const std::string& body) {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      return error_response(400, "body is not JSON");
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) return error_response(422, "text required");
    const auto text = j["text"].get<std::string>();
    if (trim(text).empty()) return error_response(422, "text is empty");
    std::lock_guard turn(*entry.turn);
    return json_response(200, to_json(entry.session->handle_query(text)));
  }

  ApiResponse events(const Entry& entry, const ApiRequest& req) {
    std::uint64_t after = 0;
    if (auto it = req.headers.find("last-event-id"); it != req.headers.end()) after = std::stoull(it->second);
    else if (auto q = req.query.find("after"); q != req.query.end()) after = std::stoull(q->second);
    const auto list = entry.session->events_since(after);
    if (auto f = req.query.find("format"); f != req.query.end() && f->second == "json") {
      json arr = json::array();
      for (const auto& e : list) arr.push_back(to_json(e));
      return json_response(200, arr);
    }
    std::string body;
    for (const auto& e : list) body += sse_frame(e);
    return {200, "text/event-stream", body};
  }

  ApiResponse dataset_view() {
    if (!config.dataset) return error_response(503, "no dataset loaded");
    const auto state = config.dataset->get();
    const auto& table = *state->table;
    json columns = json::array();
    json rows = json::array();
    for (const auto& c : table.columns()) columns.push_back(c.spec.name);
    const auto n = std::min<std::size_t>(20, table.row_count());
    for (std::size_t r = 0; r < n; ++r) {
      json row = json::array();
      for (const auto& c : table.columns()) row.push_back(c.cells[r] ? to_json(*c.cells[r]) : json(nullptr));
      rows.push_back(row);
    }
    return json_response(200, {{"metadata", to_json(state->meta)},
                               {"row_count", table.row_count()},
                               {"dropped_rows", table.dropped_rows()},
                               {"preview", {{"columns", columns}, {"rows", rows}}}});
  }

  ApiResponse toggle_column(const std::string& name, const std::string& body) {
    if (!config.dataset) return error_response(503, "no dataset loaded");
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      return error_response(400, "body is not JSON");
    }
    if (!j.is_object() || !j.contains("supported") || !j["supported"].is_boolean())
      return error_response(422, "supported must be a boolean");
    const auto current = config.dataset->get();
    if (!current->meta.find(name)) return error_response(404, "unknown column " + name);
    if (name == current->meta.action_column || name == current->meta.outcome_column)
      return error_response(422, "the action and outcome columns cannot be toggled");
    auto next = std::make_shared<DatasetState>(*current);
    for (auto& c : next->meta.columns)
      if (c.name == name) c.supported = j["supported"].get<bool>();
    config.dataset->set(next);
    return json_response(200, {{"metadata", to_json(next->meta)}});
  }

  ApiResponse conditions(const Entry& entry, const ApiRequest& req, const std::vector<std::string>& parts) {
    auto& session = *entry.session;
    if (req.method == "GET") return json_response(200, {{"conditions", to_json(session.conditions_snapshot())}});
    if (req.method == "DELETE") {
      const auto snap = parts.size() == 5 ? session.remove_condition(parts[4]) : session.clear_conditions();
      return json_response(200, {{"conditions", to_json(snap)}});
    }
    if (req.method == "PUT") {
      json j;
      try {
        j = json::parse(req.body);
      } catch (const json::exception&) {
        return error_response(400, "body is not JSON");
      }
      if (j.is_object() && j.contains("conditions")) j = j["conditions"];
      if (!j.is_object()) return error_response(422, "expected an object of column values");
      ValueMap snap = session.conditions_snapshot();
      for (const auto& [name, raw] : j.items()) {
        const auto value = value_from_json(raw);
        if (!value) return error_response(422, "invalid value for " + name);
        snap = session.set_condition(name, *value);
      }
      return json_response(200, {{"conditions", to_json(snap)}});
    }
    return error_response(405, "method not allowed");
  }

  ApiResponse static_file(const std::string& path) {
    if (config.static_dir.empty()) {
      if (path == "/") return json_response(200, {{"service", config.title}, {"api", "/api"}});
      return error_response(404, "not found");
    }
    if (path.find("..") != std::string::npos) return error_response(400, "bad path");
    auto file = config.static_dir / (path == "/" ? std::string("index.html") : path.substr(1));
    if (!std::filesystem::is_regular_file(file)) return error_response(404, "not found");
    return {200, content_type_for(file), read_file(file)};
  }

  ApiResponse route(const ApiRequest& req) {
    const auto parts = split_path(req.path);
    if (parts.empty() || parts[0] != "api") {
      if (req.method != "GET") return error_response(405, "method not allowed");
      return static_file(req.path);
    }
    if (parts.size() == 2 && parts[1] == "health") return json_response(200, {{"status", "ok"}});
    if (parts.size() == 2 && parts[1] == "tools" && req.method == "GET") {
      json arr = json::array();
      for (const auto& t : registry()) arr.push_back(to_json(t));
      return json_response(200, arr);
    }
    if (parts.size() == 2 && parts[1] == "dataset" && req.method == "GET") return dataset_view();
    if (parts.size() == 4 && parts[1] == "dataset" && parts[2] == "columns" && req.method == "PUT")
      return toggle_column(parts[3], req.body);
    if (parts.size() >= 2 && parts[1] == "sessions") {
      if (parts.size() == 2) {
        if (req.method == "POST") return create_session();
        return error_response(405, "method not allowed");
      }
      const auto entry = find(parts[2]);
      if (!entry) return error_response(404, "unknown session");
      if (parts.size() == 3 && req.method == "GET")
        return json_response(200, {{"session_id", parts[2]}, {"conditions", to_json(entry->session->conditions_snapshot())}});
      if (parts.size() == 4) {
        const auto& what = parts[3];
        if (what == "messages" && req.method == "POST") return post_message(*entry, req.body);
        if (what == "events" && req.method == "GET") return events(*entry, req);
        if (what == "conditions") return conditions(*entry, req, parts);
        if (what == "sample-questions" && req.method == "GET")
          return json_response(200, {{"questions", entry->session->sample_questions()}});
        if (what == "transcript" && req.method == "GET") {
          const auto f = req.query.count("format") ? req.query.at("format") : std::string("html");
          if (f == "html") return {200, "text/html; charset=utf-8", transcript_html(*entry->session, config.title)};
          if (f == "json") return json_response(200, transcript_json(*entry->session));
          return error_response(400, "unsupported transcript format " + f);
        }
      }
      if (parts.size() == 5 && parts[3] == "conditions" && req.method == "DELETE")
        return conditions(*entry, req, parts);
    }
    return error_response(404, "not found");
  }
};

ApiServer::ApiServer(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  auto adapt = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    for (const auto& [k, v] : req.headers) r.headers[to_lower(k)] = v;

    const auto parts = split_path(r.path);
    const bool stream = r.method == "GET" && parts.size() == 4 && parts[0] == "api" && parts[1] == "sessions" &&
                        parts[3] == "events" && !r.query.count("format");
    if (stream) {
      const auto entry = impl_->find(parts[2]);
      if (entry) {
        std::uint64_t after = 0;
        try {
          if (r.headers.count("last-event-id")) after = std::stoull(r.headers["last-event-id"]);
          else if (r.query.count("after")) after = std::stoull(r.query["after"]);
        } catch (const std::exception&) {
          res.status = 400;
          return;
        }
        auto session = entry->session;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, session, after](std::size_t, httplib::DataSink& sink) mutable {
              while (!impl_->stopping && sink.is_writable()) {
                for (const auto& e : session->events_since(after)) {
                  const auto frame = sse_frame(e);
                  if (!sink.write(frame.data(), frame.size())) return false;
                  after = e.seq;
                }
                if (!session->wait_for_events(after, std::chrono::milliseconds(250))) {
                  static constexpr char ping[] = ": ping\n\n";
                  if (!sink.write(ping, sizeof ping - 1)) return false;
                }
              }
              sink.done();
              return true;
            });
        return;
      }
    }

    ApiResponse out;
    try {
      out = impl_->route(r);
    } catch (const Error& e) {
      out = error_response(status_for(e.code()), e.what());
    } catch (const std::exception& e) {
      out = error_response(500, e.what());
    }
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  auto& http = impl_->http;
  http.Get(".*", adapt);
  http.Post(".*", adapt);
  http.Put(".*", adapt);
  http.Delete(".*", adapt);
  http.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"}});
}

ApiServer::~ApiServer() {
  stop();
  impl_->executor->wait_idle();
}

ApiResponse ApiServer::handle(const ApiRequest& request) {
  try {
    return impl_->route(request);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

std::shared_ptr<Session> ApiServer::session(const std::string& id) const {
  auto entry = impl_->find(id);
  return entry ? entry->session : nullptr;
}

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

void ApiServer::listen() { impl_->http.listen_after_bind(); }

void ApiServer::stop() {
  impl_->stopping = true;
  if (impl_->http.is_running()) impl_->http.stop();
}

}  // namespace prescribe
