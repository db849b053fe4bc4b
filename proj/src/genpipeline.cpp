#include "prescribe/genpipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "prescribe/error.hpp"

namespace prescribe {

json to_json(const ModelConfig& config) {
  return {{"param", config.param},
          {"dtype", config.dtype},
          {"base_model", config.base_model},
          {"init_method", config.init_method},
          {"init_text", config.init_text},
          {"hyperparams",
           {{"gradient_accumulation_steps", config.hyperparams.gradient_accumulation_steps},
            {"learning_rate", config.hyperparams.learning_rate},
            {"num_virtual_tokens", config.hyperparams.num_virtual_tokens}}}};
}

namespace {

struct Seed {
  Intent intent;
  const char* text;
  std::optional<bool> show_error = std::nullopt;
};

// Domain-agnostic samples, used as-is.
const std::vector<Seed>& agnostic_samples() {
  static const std::vector<Seed> samples = {
      {Intent::select_features, "What are the most important features?"},
      {Intent::select_features, "Which features matter the most?"},
      {Intent::select_features, "Select the relevant features"},
      {Intent::select_features, "Run feature selection"},
      {Intent::select_features, "Which columns should I focus on?"},
      {Intent::select_features, "Show me the cross validation plot of the features"},
      {Intent::show_causal_effect, "Show the causal effect"},
      {Intent::show_causal_effect, "What is the best action?"},
      {Intent::show_causal_effect, "Plot the average treatment effect"},
      {Intent::show_causal_effect, "How does the action affect the outcome?"},
      {Intent::show_causal_effect, "Show the causal effect with error bars", true},
      {Intent::show_causal_effect, "Show the treatment effect without error bars", false},
      {Intent::run_optimize, "Can you optimize my strategy?"},
      {Intent::run_optimize, "Optimize the policy"},
      {Intent::run_optimize, "Find the optimal policy"},
      {Intent::run_optimize, "Run the optimizer"},
      {Intent::run_optimize, "Generate an optimized policy"},
      {Intent::show_current_policy, "What is the current policy?"},
      {Intent::show_current_policy, "Show the current policy"},
      {Intent::show_current_policy, "What are the current KPIs?"},
      {Intent::show_current_policy, "How are we doing right now?"},
      {Intent::show_current_policy, "What does the existing strategy look like?"},
      {Intent::counterfactual, "Predict the counterfactual outcome"},
      {Intent::counterfactual, "What would happen under different conditions?"},
      {Intent::unknown, "Hello how are you?"},
      {Intent::unknown, "What can you do?"},
      {Intent::unknown, "Tell me a joke"},
      {Intent::unknown, "What is the weather like today?"},
      {Intent::unknown, "Who are you?"},
  };
  return samples;
}

struct Template {
  Intent intent;
  const char* text;
  std::optional<bool> show_error = std::nullopt;
};

// Placeholders: [ACTION], [OUTCOME], [COLUMN], [VALUE], [NUM_RULES], [BUDGET].
const std::vector<Template>& templates() {
  static const std::vector<Template> list = {
      {Intent::show_causal_effect, "How does [ACTION] affect [OUTCOME]?"},
      {Intent::counterfactual, "What if [COLUMN] is [VALUE]?"},
      {Intent::select_features, "Is [COLUMN] an important variable?"},
      {Intent::run_optimize, "Optimize [ACTION] with [NUM_RULES] rules and an average budget of [BUDGET]"},
      {Intent::show_current_policy, "What is the current [OUTCOME] rate?"},
      {Intent::counterfactual, "How does [ACTION] affect [OUTCOME] when [COLUMN] is [VALUE]?"},
      {Intent::show_causal_effect, "What is the effect of [ACTION] on [OUTCOME]?"},
      {Intent::select_features, "Does [COLUMN] matter for [OUTCOME]?"},
      {Intent::run_optimize, "Use [NUM_RULES] rules"},
      {Intent::show_current_policy, "Show the current [ACTION] policy"},
      {Intent::counterfactual, "Show the effect of [ACTION] for [COLUMN] equal to [VALUE]"},
      {Intent::show_causal_effect, "Show the causal effect of [ACTION]"},
      {Intent::run_optimize, "Set the average budget to [BUDGET]"},
      {Intent::select_features, "Which features affect [OUTCOME] the most?"},
      {Intent::counterfactual, "Predict [OUTCOME] if [COLUMN] were [VALUE]"},
      {Intent::show_current_policy, "How is [ACTION] assigned today?"},
      {Intent::run_optimize, "Run the optimizer with a budget of [BUDGET]"},
      {Intent::show_causal_effect, "Plot [OUTCOME] against [ACTION] with error bars", true},
      {Intent::counterfactual, "Suppose [COLUMN] is [VALUE], what happens to [OUTCOME]?"},
      {Intent::select_features, "Select the features that drive [OUTCOME]"},
      {Intent::run_optimize, "Find the best [ACTION] policy with [NUM_RULES] rules"},
      {Intent::show_current_policy, "What is the baseline [OUTCOME]?"},
      {Intent::counterfactual, "Show [OUTCOME] by [ACTION] given [COLUMN] of [VALUE]"},
      {Intent::run_optimize, "Optimize [OUTCOME] using [NUM_RULES] rules and a budget of [BUDGET]"},
      {Intent::show_causal_effect, "Does changing [ACTION] change [OUTCOME]?"},
  };
  return list;
}

bool has(std::string_view text, std::string_view placeholder) { return text.find(placeholder) != std::string_view::npos; }

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::vector<double> budget_choices(const DatasetMetadata& meta, const DataTable& table) {
  double lo = 0.0, hi = 0.0;
  if (!meta.action_costs.empty()) {
    lo = hi = meta.action_costs.begin()->second;
    for (const auto& [_, c] : meta.action_costs) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  } else {
    bool first = true;
    for (double v : table.numeric(meta.action_column)) {
      if (!std::isfinite(v)) continue;
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  std::vector<double> out;
  for (double f : {0.25, 0.4, 0.5, 0.6, 0.75}) {
    const double b = std::round((lo + (hi - lo) * f) * 10.0) / 10.0;
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  }
  return out;
}

ParamValues empty_params(const std::vector<std::string>& columns) {
  ParamValues p;
  for (const auto& c : columns) p[c] = std::nullopt;
  for (const auto* s : {"num_rules", "average_budget", "show_error"}) p[s] = std::nullopt;
  return p;
}

}  // namespace

std::vector<PromptSample> generate_prompt_database(const DatasetMetadata& meta, const DataTable& table,
                                                   const std::vector<std::string>& columns, std::uint64_t seed,
                                                   std::size_t target) {
  if (columns.empty()) throw Error(Errc::no_supported_columns, "no columns selected for the prompt database");
  std::mt19937_64 rng(seed);

  // (column, value) pairs interleaved across columns so each gets used.
  std::vector<std::string> cols = columns;
  shuffle(cols, rng);
  std::vector<std::vector<Value>> values;
  for (const auto& c : cols) {
    auto v = distinct_values(table, c);
    shuffle(v, rng);
    values.push_back(std::move(v));
  }
  std::vector<std::pair<std::string, Value>> pairs;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (round < values[i].size()) {
        pairs.emplace_back(cols[i], values[i][round]);
        any = true;
      }
    }
    if (!any) break;
  }
  if (pairs.empty()) throw Error(Errc::no_supported_columns, "selected columns have no values");
  std::vector<double> rules = {2, 3, 4, 5, 6, 8};
  shuffle(rules, rng);
  auto budgets = budget_choices(meta, table);
  shuffle(budgets, rng);

  std::vector<PromptSample> db;
  std::set<std::string> seen;
  const auto base = empty_params(columns);
  for (const auto& s : agnostic_samples()) {
    PromptSample p{s.text, s.intent, base};
    if (s.show_error) p.params["show_error"] = Value{*s.show_error};
    seen.insert(to_lower(p.query));
    db.push_back(std::move(p));
  }

  std::size_t pair_i = 0, rule_i = 0, budget_i = 0;
  for (std::size_t round = 0; round < 64 && db.size() < target; ++round) {
    bool progress = false;
    for (const auto& t : templates()) {
      if (db.size() >= target) break;
      const std::string_view text = t.text;
      const bool variable = has(text, "[COLUMN]") || has(text, "[NUM_RULES]") || has(text, "[BUDGET]");
      if (!variable && round > 0) continue;
      PromptSample p{t.text, t.intent, base};
      replace_all(p.query, "[ACTION]", meta.action_column);
      replace_all(p.query, "[OUTCOME]", meta.outcome_column);
      if (has(text, "[COLUMN]")) {
        const auto& [col, val] = pairs[pair_i++ % pairs.size()];
        replace_all(p.query, "[COLUMN]", col);
        if (has(text, "[VALUE]")) {
          replace_all(p.query, "[VALUE]", render_literal(val));
          p.params[col] = val;
        }
      }
      if (has(text, "[NUM_RULES]")) {
        const double r = rules[rule_i++ % rules.size()];
        replace_all(p.query, "[NUM_RULES]", render_number(r));
        p.params["num_rules"] = Value{r};
      }
      if (has(text, "[BUDGET]") && !budgets.empty()) {
        const double b = budgets[budget_i++ % budgets.size()];
        replace_all(p.query, "[BUDGET]", render_number(b));
        p.params["average_budget"] = Value{b};
      }
      if (t.show_error) p.params["show_error"] = Value{*t.show_error};
      if (!seen.insert(to_lower(p.query)).second) continue;
      db.push_back(std::move(p));
      progress = true;
    }
    if (!progress && round > 0) break;
  }
  return db;
}

std::map<std::string, std::vector<TrainingLine>> split_training_files(const std::vector<PromptSample>& db,
                                                                      const std::vector<ExtractorSpec>& specs) {
  std::map<std::string, std::vector<TrainingLine>> out;
  auto& intent = out["intent"];
  for (const auto& s : db) intent.push_back({s.query, std::string(to_string(s.intent))});
  for (const auto& spec : specs) {
    auto& lines = out[spec.param];
    for (const auto& s : db) lines.push_back({s.query, expected_output(s, spec)});
  }
  return out;
}

std::vector<ModelConfig> generate_model_configs(const std::vector<ExtractorSpec>& specs) {
  std::vector<ModelConfig> out;
  ModelConfig intent;
  intent.param = "intent";
  intent.dtype = "intent";
  intent.init_text = intent_instruction();
  out.push_back(intent);
  for (const auto& spec : specs) {
    ModelConfig c;
    c.param = spec.param;
    c.dtype = std::string(to_string(spec.dtype));
    c.init_text = spec.init_text.empty() ? render_instruction(spec) : spec.init_text;
    out.push_back(std::move(c));
  }
  return out;
}

std::string render_system_prompt(const DatasetMetadata& meta) {
  std::string text =
      "You are a friendly and cheery AI agent named PrecAIse, pronounced `Precise'.\n"
      "Your job is to assist analysts to determine the optimal policy.\n"
      "You were built with a goal to help business users make better decisions by\n"
      "leveraging the power of AI.\n"
      "\n"
      "You are working with prescriptive policy models using a {TITLE} dataset.\n"
      "Action variable is {ACTION}.\n"
      "Outcome is {OUTCOME}.\n"
      "\n"
      "Based on every user's query, you identify their intent from the following:\n"
      "- select_features\n"
      "- show_causal_effect\n"
      "- run_optimize\n"
      "- show_current_policy\n"
      "- counterfactual\n"
      "\n"
      "The key functionalities that you currently support include\n"
      "- selecting the important features for treatment effect estimation\n"
      "- quantifying the treatment effect\n"
      "- quantifying the treatment effect conditioned on covariate values\n"
      "- generating a set of optimized policies\n"
      "- evaluating the KPIs\n"
      "- and predicting counterfactual scenarios.\n"
      "\n"
      "When a user query can be mapped to one of the existing functionalities\n"
      "with necessary parameters, reply with enthusiasm that you are happy to\n"
      "assist the user and you are working on the query.\n"
      "\n"
      "You are harmless and refrain from generating content involving any form\n"
      "of bias, violence, discrimination or inappropriate content.\n"
      "Do not say anything outside the field of the dataset and\n"
      "prescriptive analysis and do not start a conversation off topic to causal\n"
      "inference.\n"
      "\n"
      "If prompted off topic or given a silly request, kindly redirect user\n"
      "back to the task at hand.\n"
      "If the user is asking for a tool to be used, tell them you're happy to\n"
      "help with that. Always keep responses as short (under 50 words) and\n"
      "concise as possible and only expand when prompted.\n"
      "Do not make up information.\n";
  // Braces inside substituted values would survive as literal text; strip them.
  auto clean = [](std::string s) {
    s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '{' || c == '}'; }), s.end());
    return s;
  };
  replace_all(text, "{TITLE}", clean(meta.title));
  replace_all(text, "{ACTION}", clean(meta.action_column));
  replace_all(text, "{OUTCOME}", clean(meta.outcome_column));
  return text;
}

// ---------------------------------------------------------------------------

namespace {

void put(const std::filesystem::path& dir, const std::string& rel, const std::string& contents,
         std::vector<std::string>& files) {
  try {
    write_file(dir / rel, contents);
  } catch (const Error& e) {
    throw Error(Errc::io_error, e.what());
  }
  files.push_back(rel);
}

}  // namespace

SetupBundle run_setup(const DatasetMetadata& meta, const DataTable& table, const std::vector<std::string>& columns,
                      const std::filesystem::path& out, const SetupOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(out / "train", ec);
  std::filesystem::create_directories(out / "configs", ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + out.string() + ": " + ec.message());

  const auto db = generate_prompt_database(meta, table, columns, options.seed, options.target);
  const auto specs = extractor_specs(meta, columns);

  SetupBundle bundle;
  bundle.dir = out;
  bundle.columns = columns;
  put(out, "prompt_db.jsonl", render_prompt_db(db), bundle.files);
  for (const auto& [param, lines] : split_training_files(db, specs)) {
    std::string text;
    for (const auto& l : lines) text += json{{"input", l.input}, {"output", l.output}}.dump() + "\n";
    put(out, "train/" + param + ".jsonl", text, bundle.files);
  }
  for (const auto& config : generate_model_configs(specs))
    put(out, "configs/" + config.param + ".json", to_json(config).dump(2) + "\n", bundle.files);
  put(out, "system_prompt.txt", render_system_prompt(meta), bundle.files);

  DatasetMetadata selected = meta;
  const auto data_path = std::filesystem::absolute(meta.resolved_path()).lexically_normal();
  selected.path = data_path.string();
  for (auto& c : selected.columns) {
    if (c.name == meta.action_column || c.name == meta.outcome_column) continue;
    c.supported = std::find(columns.begin(), columns.end(), c.name) != columns.end();
  }
  put(out, "metadata.json", to_json(selected).dump(2) + "\n", bundle.files);

  std::sort(bundle.files.begin(), bundle.files.end());
  json manifest = {{"title", meta.title},
                   {"action", meta.action_column},
                   {"outcome", meta.outcome_column},
                   {"columns", columns},
                   {"seed", options.seed},
                   {"target_count", options.target},
                   {"prompt_samples", db.size()},
                   {"data_path", data_path.string()},
                   {"files", bundle.files}};
  put(out, "manifest.json", manifest.dump(2) + "\n", bundle.files);
  std::sort(bundle.files.begin(), bundle.files.end());
  bundle.digest = directory_digest(out);
  return bundle;
}

std::string directory_digest(const std::filesystem::path& dir) {
  std::vector<std::string> rel;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) rel.push_back(std::filesystem::relative(entry.path(), dir).generic_string());
  std::sort(rel.begin(), rel.end());
  std::uint64_t h = fnv1a("");
  for (const auto& r : rel) {
    h = fnv1a(r, h);
    h = fnv1a(std::string_view("\0", 1), h);
    h = fnv1a(read_file(dir / r), h);
  }
  return hex_digest(h);
}

LoadedBundle load_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw Error(Errc::file_not_found, manifest_path.string());
  const auto manifest = json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded()) throw Error(Errc::invalid_metadata, "bad manifest " + manifest_path.string());

  LoadedBundle b;
  b.dir = dir;
  b.meta = load_metadata(dir / "metadata.json");
  b.columns = manifest.value("columns", std::vector<std::string>{});
  b.seed = manifest.value("seed", std::uint64_t{0});
  b.data_path = manifest.value("data_path", std::string{});
  b.db = parse_prompt_db(read_file(dir / "prompt_db.jsonl"));
  b.specs = extractor_specs(b.meta, b.columns);
  b.system_prompt = read_file(dir / "system_prompt.txt");
  return b;
}

}  // namespace prescribe
