#include "prescribe/cli.hpp"

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "prescribe/causal.hpp"
#include "prescribe/error.hpp"
#include "prescribe/eval.hpp"
#include "prescribe/fixtures.hpp"
#include "prescribe/server.hpp"

namespace prescribe {

namespace {

std::shared_ptr<Provider> provider_from_flags(const std::string& kind, const std::string& script) {
  ProviderConfig config;
  const auto parsed = parse_provider_kind(kind);
  if (!parsed) throw Error(Errc::precondition, "unknown provider " + kind);
  config.kind = *parsed;
  config.script = script;
  return make_provider(config);
}

std::vector<std::string> columns_for_setup(const DatasetMetadata& meta, const DataTable& table, bool skip,
                                           std::uint64_t seed) {
  const auto covariates = meta.covariates();
  const bool overridden = std::any_of(meta.columns.begin(), meta.columns.end(), [](const ColumnSpec& c) {
    return !c.supported;
  });
  if (skip || overridden) return covariates;
  auto report = select_features(table, meta, 5, seed);
  if (report.selected.empty()) return covariates;
  return report.selected;
}

json setup_summary(const SetupBundle& b) {
  return {{"dir", b.dir.string()}, {"columns", b.columns}, {"files", b.files}, {"digest", b.digest}};
}

}  // namespace

std::shared_ptr<Session> make_session(const LoadedBundle& bundle, std::shared_ptr<const DataTable> table,
                                      std::shared_ptr<Provider> provider, const std::string& strategy,
                                      std::shared_ptr<JobExecutor> executor, const std::string& id) {
  auto state = std::make_shared<DatasetState>();
  state->meta = bundle.meta;
  state->table = table;
  SessionConfig sc;
  sc.dataset = std::make_shared<DatasetHandle>(state);
  sc.system_prompt = bundle.system_prompt;
  sc.fallback_strategy = std::make_shared<DeterministicStrategy>(bundle.db, bundle.meta, *table);
  if (strategy == "fewshot")
    sc.strategy = std::make_shared<FewShotStrategy>(bundle.db, provider, bundle.specs,
                                                    FewShotStrategy::kDefaultExamples, bundle.seed);
  else
    sc.strategy = sc.fallback_strategy;
  sc.specs = bundle.specs;
  sc.provider = std::move(provider);
  sc.executor = std::move(executor);
  sc.seed = bundle.seed;
  return std::make_shared<Session>(id, std::move(sc));
}

const std::vector<std::string>& demo_queries() {
  static const std::vector<std::string> queries = {
      "What can you do?",
      "What are the most important features?",
      "How does CAMPAIGN affect CONVERSION when euribor3m is 4.964?",
      "What is the current policy?",
      "Can you optimize my strategy?",
      "Use 4 rules",
      "Set the average budget to 3.5",
  };
  return queries;
}

DemoRun run_demo(const std::filesystem::path& out, std::uint64_t seed) {
  DemoRun run;
  const auto fixture = bank_fixture();
  const auto meta_path = write_fixture(fixture, out / "fixture");
  auto meta = load_metadata(meta_path);
  const auto table = load_table(meta);
  const auto columns = columns_for_setup(meta, table, false, seed);
  run.bundle = run_setup(meta, table, columns, out / "bundle", SetupOptions{seed, kDefaultTargetCount});

  const auto bundle = load_bundle(out / "bundle");
  auto loaded = std::make_shared<const DataTable>(load_table(bundle.meta, bundle.data_path));
  write_file(out / "demo_script.jsonl", demo_script());
  run.provider = ScriptedProvider::from_jsonl(demo_script());
  auto executor = std::make_shared<JobExecutor>(2);
  run.session = make_session(bundle, loaded, run.provider, "deterministic", executor, "demo");

  std::uint64_t seen = 0;
  for (const auto& q : demo_queries()) {
    DemoTurn turn;
    turn.query = q;
    turn.result = run.session->handle_query(q);
    run.session->wait_idle();
    turn.conditions_after = run.session->conditions_snapshot();
    turn.events = run.session->events_since(seen);
    if (!turn.events.empty()) seen = turn.events.back().seq;
    run.turns.push_back(std::move(turn));
  }
  executor->wait_idle();
  run.events = run.session->events_since(0);

  std::string log;
  for (const auto& e : run.events) log += to_json(e).dump() + "\n";
  write_file(out / "events.jsonl", log);
  write_file(out / "transcript.json", transcript_json(*run.session).dump(2) + "\n");
  run.transcript_html = out / "transcript.html";
  write_file(run.transcript_html, transcript_html(*run.session, bundle.meta.title));
  return run;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prescriptive analytics agent"};
  app.require_subcommand(1, 1);
  std::string format = "text";

  // setup
  auto* setup = app.add_subcommand("setup", "Generate the NLU bundle for a dataset");
  std::string setup_meta, setup_data, setup_out;
  std::uint64_t setup_seed = 0;
  std::size_t target = kDefaultTargetCount;
  bool skip_fs = false;
  setup->add_option("--meta", setup_meta, "Metadata JSON")->required()->check(CLI::ExistingFile);
  setup->add_option("--data", setup_data, "CSV file")->required()->check(CLI::ExistingFile);
  setup->add_option("--out", setup_out, "Bundle directory")->required();
  setup->add_option("--seed", setup_seed);
  setup->add_option("--target-count", target)->check(CLI::PositiveNumber);
  setup->add_flag("--skip-feature-selection", skip_fs);
  setup->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string serve_bundle, serve_data, serve_meta, serve_provider = "echo", serve_script, serve_static,
                                                     serve_host = "127.0.0.1", serve_strategy = "deterministic";
  int port = 8080;
  serve->add_option("--bundle", serve_bundle)->check(CLI::ExistingDirectory);
  serve->add_option("--data", serve_data)->check(CLI::ExistingFile);
  serve->add_option("--meta", serve_meta)->check(CLI::ExistingFile);
  serve->add_option("--provider", serve_provider)->check(CLI::IsMember({"scripted", "http", "echo"}));
  serve->add_option("--script", serve_script)->check(CLI::ExistingFile);
  serve->add_option("--strategy", serve_strategy)->check(CLI::IsMember({"deterministic", "fewshot"}));
  serve->add_option("--static", serve_static)->check(CLI::ExistingDirectory);
  serve->add_option("--host", serve_host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));

  // eval
  auto* eval = app.add_subcommand("eval", "Score an NLU strategy on perturbed queries");
  std::string eval_bundle, eval_strategy, eval_provider = "echo", eval_script;
  std::uint64_t eval_seed = 0;
  std::size_t eval_n = 238;
  std::string eval_format = "markdown";
  eval->add_option("--bundle", eval_bundle)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--strategy", eval_strategy)->required()->check(CLI::IsMember({"deterministic", "fewshot"}));
  eval->add_option("--provider", eval_provider)->check(CLI::IsMember({"scripted", "http", "echo"}));
  eval->add_option("--script", eval_script)->check(CLI::ExistingFile);
  eval->add_option("--seed", eval_seed);
  eval->add_option("--n", eval_n, "Perturbed query count; 0 scores the prompt database itself");
  eval->add_option("--format", eval_format)->check(CLI::IsMember({"markdown", "json", "csv"}));

  // ask
  auto* ask = app.add_subcommand("ask", "Answer one query headlessly");
  std::string ask_bundle, ask_data, ask_provider = "echo", ask_script, ask_strategy = "deterministic";
  std::vector<std::string> ask_queries;
  ask->add_option("--bundle", ask_bundle)->required()->check(CLI::ExistingDirectory);
  ask->add_option("--data", ask_data)->check(CLI::ExistingFile);
  ask->add_option("--provider", ask_provider)->check(CLI::IsMember({"scripted", "http", "echo"}));
  ask->add_option("--script", ask_script)->check(CLI::ExistingFile);
  ask->add_option("--strategy", ask_strategy)->check(CLI::IsMember({"deterministic", "fewshot"}));
  ask->add_option("query", ask_queries, "Query text; several run as consecutive turns")->required();

  // demo
  auto* demo = app.add_subcommand("demo", "Play the bank walkthrough against the scripted provider");
  std::string demo_out;
  std::uint64_t demo_seed = 0;
  demo->add_option("--out", demo_out)->required();
  demo->add_option("--seed", demo_seed);
  demo->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*setup) {
      auto meta = load_metadata(setup_meta);
      const auto table = load_table(meta, setup_data);
      meta.path = std::filesystem::absolute(setup_data).string();
      const auto columns = columns_for_setup(meta, table, skip_fs, setup_seed);
      const auto bundle = run_setup(meta, table, columns, setup_out, SetupOptions{setup_seed, target});
      if (format == "json") {
        out << setup_summary(bundle).dump(2) << "\n";
      } else {
        out << "selected columns:";
        for (const auto& c : bundle.columns) out << " " << c;
        out << "\nfiles:\n";
        for (const auto& f : bundle.files) out << "  " << f << "\n";
        out << "digest: " << bundle.digest << "\n";
      }
      return 0;
    }

    if (*eval) {
      const auto bundle = load_bundle(eval_bundle);
      const auto table = load_table(bundle.meta, bundle.data_path);
      auto provider = provider_from_flags(eval_provider, eval_script);
      std::unique_ptr<Strategy> strategy;
      if (eval_strategy == "fewshot")
        strategy = std::make_unique<FewShotStrategy>(bundle.db, provider, bundle.specs,
                                                     FewShotStrategy::kDefaultExamples, eval_seed);
      else
        strategy = std::make_unique<DeterministicStrategy>(bundle.db, bundle.meta, table);
      const auto testset = eval_n == 0 ? bundle.db : perturb_queries(bundle.db, eval_seed, eval_n);
      auto report = evaluate_intent(*strategy, testset);
      const auto extractors = evaluate_extractors(*strategy, bundle.specs, testset);
      report.extractor_rates = extractors.extractor_rates;
      report.extractor_mean = extractors.extractor_mean;
      out << emit_report({report}, eval_format);
      return 0;
    }

    if (*ask) {
      auto bundle = load_bundle(ask_bundle);
      if (!ask_data.empty()) bundle.data_path = ask_data;
      auto table = std::make_shared<const DataTable>(load_table(bundle.meta, bundle.data_path));
      auto session = make_session(bundle, table, provider_from_flags(ask_provider, ask_script), ask_strategy, nullptr);
      json turns = json::array();
      for (const auto& q : ask_queries) {
        const auto before = session->events_since(0).size();
        auto result = session->handle_query(q);
        const auto events = session->events_since(before);
        for (const auto& e : events)
          if (e.type == EventType::tool_result)
            for (const auto& c : e.payload["result"]["charts"]) result.charts.push_back(chart_from_json(c));
        auto j = to_json(result);
        json ev = json::array();
        for (const auto& e : events) ev.push_back(to_json(e));
        j["events"] = ev;
        turns.push_back(j);
      }
      out << (turns.size() == 1 ? turns[0] : turns).dump(2) << "\n";
      return 0;
    }

    if (*serve) {
      std::optional<ServerConfig> config;
      if (!serve_bundle.empty()) {
        auto bundle = load_bundle(serve_bundle);
        if (!serve_meta.empty()) {
          auto meta = load_metadata(serve_meta);
          for (auto& c : meta.columns)
            if (!c.supported || std::find(bundle.columns.begin(), bundle.columns.end(), c.name) == bundle.columns.end())
              c.supported = c.name == meta.action_column || c.name == meta.outcome_column;
          bundle.meta = meta;
        }
        if (!serve_data.empty()) bundle.data_path = serve_data;
        auto table = std::make_shared<const DataTable>(load_table(bundle.meta, bundle.data_path));
        config = server_config(bundle, table, provider_from_flags(serve_provider, serve_script), serve_strategy);
      } else {
        config.emplace();
        config->provider = provider_from_flags(serve_provider, serve_script);
      }
      config->static_dir = serve_static;
      ApiServer server(std::move(*config));
      const int bound = server.bind(serve_host, port);
      if (bound < 0) throw Error(Errc::io_error, "cannot bind " + serve_host + ":" + std::to_string(port));
      out << "listening on http://" << serve_host << ":" << bound << std::endl;
      server.listen();
      return 0;
    }

    if (*demo) {
      const auto run = run_demo(demo_out, demo_seed);
      json turns = json::array();
      for (const auto& t : run.turns)
        turns.push_back({{"query", t.query}, {"intent", to_string(t.result.intent)}, {"tool", t.result.tool},
                         {"missing", t.result.missing}, {"reply", t.result.reply}});
      if (format == "json") {
        out << json{{"bundle", setup_summary(run.bundle)},
                    {"turns", turns},
                    {"events", run.events.size()},
                    {"transcript", run.transcript_html.string()}}
                   .dump(2)
            << "\n";
      } else {
        for (const auto& entry : run.session->transcript())
          out << (entry.role == "user" ? "> " : "  ") << entry.text
              << (entry.charts.empty() ? "" : "  [" + std::to_string(entry.charts.size()) + " chart(s)]") << "\n";
        out << "transcript: " << run.transcript_html.string() << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace prescribe
