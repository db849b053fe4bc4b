#include "prescribe/nlu.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <random>
#include <set>
#include <sstream>

#include "prescribe/error.hpp"
#include "prescribe/tools.hpp"

namespace prescribe {

std::string_view to_string(Intent intent) {
  switch (intent) {
    case Intent::select_features: return "select_features";
    case Intent::show_causal_effect: return "show_causal_effect";
    case Intent::run_optimize: return "run_optimize";
    case Intent::show_current_policy: return "show_current_policy";
    case Intent::counterfactual: return "counterfactual";
    case Intent::unknown: return "unknown";
  }
  return "unknown";
}

Intent parse_intent(std::string_view text) {
  auto t = trim(text);
  while (!t.empty() && std::string_view("'\"`.,:;!?").find(t.front()) != std::string_view::npos) t.remove_prefix(1);
  while (!t.empty() && std::string_view("'\"`.,:;!?").find(t.back()) != std::string_view::npos) t.remove_suffix(1);
  const auto lower = to_lower(trim(t));
  if (const auto* tool = lookup(lower)) {
    for (auto i : kIntents)
      if (to_string(i) == tool->name) return i;
  }
  return Intent::unknown;
}

std::string null_default_for(Dtype dtype) { return dtype == Dtype::numeric ? "-1" : "Unknown"; }

std::string render_instruction(const ExtractorSpec& spec) {
  return "From each command given, extract out the value of \"" + spec.param + "\" if specified.\n" +
         "Only output values corresponding to the datatype " + std::string(to_string(spec.dtype)) + ".\n" +
         "If none is given or you are not sure, output " + null_default_for(spec.dtype) + ".\n\n" + spec.param +
         " description:\n" + spec.description + "\n\n<examples>";
}

std::string intent_instruction() {
  return "Classify command as one of following API calls.\n"
         "If none can be matched, just output unknown.\n"
         "'select_features' cross validation plot of the causally relevant features\n"
         "'show_causal_effect' shows the causal effect conditioned on given features.\n"
         "'run_opt' produces the optimized pricing policy for given conditions.\n"
         "'show_current_policy' shows the historical policy for given conditions.\n"
         "'counterfactual' predicts the counterfactual outcome when columns are fixed.\n"
         "\n"
         "If the intent is unclear, output `unknown'";
}

namespace {

ExtractorSpec make_spec(std::string param, Dtype dtype, std::string description, bool integer = false) {
  ExtractorSpec s;
  s.param = std::move(param);
  s.dtype = dtype;
  s.description = std::move(description);
  s.null_default = null_default_for(dtype);
  s.integer = integer;
  s.init_text = render_instruction(s);
  return s;
}

}  // namespace

std::vector<ExtractorSpec> extractor_specs(const DatasetMetadata& meta, const std::vector<std::string>& columns) {
  std::vector<ExtractorSpec> out;
  for (const auto& c : columns) {
    const auto& spec = meta.column(c);
    out.push_back(make_spec(spec.name, spec.dtype, spec.description));
  }
  out.push_back(make_spec("num_rules", Dtype::numeric,
                          "Number of rules, i.e. leaf segments, in the optimized policy tree. A whole number.", true));
  out.push_back(make_spec("average_budget", Dtype::numeric,
                          "Average budget per row for the action " + meta.action_column + " in the optimized policy."));
  out.push_back(make_spec("show_error", Dtype::boolean, "Whether to show error bars on the causal effect plot."));
  return out;
}

std::vector<ExtractorSpec> extractor_specs(const DatasetMetadata& meta) {
  return extractor_specs(meta, meta.covariates());
}

json to_json(const PromptSample& sample) {
  json params = json::object();
  for (const auto& [k, v] : sample.params) params[k] = v ? to_json(*v) : json(nullptr);
  return {{"query", sample.query}, {"labels", {{"intent", std::string(to_string(sample.intent))}, {"params", params}}}};
}

PromptSample sample_from_json(const json& j) {
  PromptSample s;
  try {
    s.query = j.at("query").get<std::string>();
    const auto& labels = j.at("labels");
    s.intent = parse_intent(labels.at("intent").get<std::string>());
    if (labels.contains("params")) {
      for (const auto& [k, v] : labels.at("params").items()) s.params[k] = v.is_null() ? std::nullopt : value_from_json(v);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::precondition, std::string("bad prompt sample: ") + e.what());
  }
  return s;
}

std::vector<PromptSample> parse_prompt_db(std::string_view jsonl) {
  std::vector<PromptSample> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::precondition, "bad prompt database line: " + line);
    out.push_back(sample_from_json(j));
  }
  return out;
}

std::string render_prompt_db(const std::vector<PromptSample>& db) {
  std::string out;
  for (const auto& s : db) out += to_json(s).dump() + "\n";
  return out;
}

std::string expected_output(const PromptSample& sample, const ExtractorSpec& spec) {
  auto it = sample.params.find(spec.param);
  if (it == sample.params.end() || !it->second) return spec.null_default;
  const auto typed = coerce(*it->second, spec.dtype);
  return typed ? render_literal(*typed) : spec.null_default;
}

ValueMap Extraction::present() const {
  ValueMap out;
  for (const auto& [k, v] : values)
    if (v) out[k] = *v;
  return out;
}

// ---------------------------------------------------------------------------
// Gates

std::optional<Value> gate(std::string_view raw, const ExtractorSpec& spec) {
  auto t = trim(raw);
  // Completions often end with a newline-separated continuation; only the
  // first line is the answer.
  if (const auto nl = t.find('\n'); nl != std::string_view::npos) t = trim(t.substr(0, nl));
  while (!t.empty() && (t.front() == '"' || t.front() == '\'')) t.remove_prefix(1);
  while (!t.empty() && (t.back() == '"' || t.back() == '\'')) t.remove_suffix(1);
  if (t.empty() || iequals(t, spec.null_default) || iequals(t, "unknown") || iequals(t, "none") || iequals(t, "null"))
    return std::nullopt;
  if (spec.dtype == Dtype::numeric) {
    const auto d = parse_number(t);
    if (!d) return std::nullopt;
    if (*d == -1.0) return std::nullopt;
    if (spec.integer && (*d != std::floor(*d) || *d < 1)) return std::nullopt;
    return Value{*d};
  }
  return parse_value(t, spec.dtype);
}

std::pair<std::optional<double>, std::optional<double>> parse_numeric_pair(std::string_view raw) {
  const auto t = trim(raw);
  // The separator is the first '-' that is not a leading sign.
  std::size_t sep = std::string_view::npos;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] == '-') {
      sep = i;
      break;
    }
  }
  if (sep == std::string_view::npos) return {std::nullopt, std::nullopt};
  auto side = [](std::string_view s) -> std::optional<double> {
    s = trim(s);
    if (!s.empty() && s.front() == '$') s.remove_prefix(1);
    return parse_number(s);
  };
  return {side(t.substr(0, sep)), side(t.substr(sep + 1))};
}

Intent classify_intent(std::string_view query, const Strategy& strategy) {
  if (trim(query).empty()) return Intent::unknown;
  return parse_intent(strategy.classify_raw(query));
}

std::optional<Value> extract_param(std::string_view query, const ExtractorSpec& spec, const Strategy& strategy) {
  if (trim(query).empty()) return std::nullopt;
  return gate(strategy.extract_raw(query, spec), spec);
}

Extraction extract_all(std::string_view query, const std::vector<ExtractorSpec>& specs, const Strategy& strategy,
                       bool parallel) {
  Extraction out;
  const std::string q(query);
  auto run_one = [&strategy, &q](const ExtractorSpec& spec) {
    const auto start = std::chrono::steady_clock::now();
    std::optional<Value> value;
    std::string error;
    try {
      value = extract_param(q, spec, strategy);
    } catch (const Error& e) {
      error = spec.param + ": " + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return std::make_tuple(value, secs, error);
  };
  std::vector<std::tuple<std::optional<Value>, double, std::string>> results(specs.size());
  if (parallel && specs.size() > 1) {
    std::vector<std::future<std::tuple<std::optional<Value>, double, std::string>>> futures;
    for (const auto& spec : specs) futures.push_back(std::async(std::launch::async, run_one, std::cref(spec)));
    for (std::size_t i = 0; i < specs.size(); ++i) results[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < specs.size(); ++i) results[i] = run_one(specs[i]);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& [value, secs, error] = results[i];
    out.values[specs[i].param] = value;
    out.latencies[specs[i].param] = secs;
    if (!error.empty()) out.errors.push_back(error);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenisation

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  auto flush = [&] {
    if (!current.empty()) out.push_back(current);
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
    if (word(c)) {
      current += c;
    } else if ((c == '.' || c == '-') && i + 1 < text.size() && word(text[i + 1]) &&
               (!current.empty() || (c == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]))))) {
      current += c;
    } else if (c == '\'' || c == '\xe2') {
      // apostrophes join ("what's" -> "whats")
      if (c == '\xe2' && i + 2 < text.size()) i += 2;
    } else {
      flush();
      if (c == '=') out.emplace_back("=");
    }
  }
  flush();
  return out;
}

namespace {

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {
      "a",      "an",   "the",   "of",    "to",    "is",   "are",  "be",    "was",  "were", "am",     "do",
      "does",   "did",  "me",    "my",    "i",     "you",  "your", "we",    "our",  "us",   "it",     "its",
      "this",   "that", "these", "those", "for",   "on",   "in",   "at",    "by",   "and",  "or",     "please",
      "pls",    "plz",  "kindly", "could", "can",  "would", "will", "hey",  "thanks", "thank", "just", "so",
      "now",    "then", "there", "some",  "any",   "ok",   "okay", "let",   "lets", "whats", "mind", "quickly",
      "really", "also", "too",   "very",  "like",  "want", "wanna", "need", "im",   "id",   "ill",    "get",
      "go",     "know", "see"};
  return words;
}

const std::map<std::string, std::string>& synonyms() {
  static const std::map<std::string, std::string> map = {
      {"display", "show"},      {"tell", "show"},          {"give", "show"},         {"visualize", "show"},
      {"view", "show"},         {"list", "show"},          {"present", "show"},      {"optimal", "best"},
      {"ideal", "best"},        {"top", "best"},           {"optimise", "optimize"}, {"optimization", "optimize"},
      {"optimized", "optimize"}, {"optimizing", "optimize"}, {"improve", "optimize"}, {"maximize", "optimize"},
      {"variable", "feature"},  {"factor", "feature"},     {"covariate", "feature"}, {"predictor", "feature"},
      {"impact", "affect"},     {"influence", "affect"},   {"affects", "affect"},    {"effects", "effect"},
      {"significant", "important"}, {"relevant", "important"}, {"key", "important"}, {"crucial", "important"},
      {"existing", "current"},  {"present-day", "current"}, {"historical", "current"}, {"baseline", "current"},
      {"policies", "policy"},   {"strategies", "strategy"}, {"plan", "strategy"},   {"approach", "strategy"},
      {"supposing", "if"},      {"suppose", "if"},         {"assuming", "if"},       {"imagine", "if"},
      {"rules", "rule"},        {"leaves", "rule"},        {"segments", "rule"},     {"hi", "hello"},
      {"greetings", "hello"},   {"capabilities", "able"},  {"abilities", "able"}};
  return map;
}

std::string stem(std::string token) {
  if (token.size() > 3 && token.back() == 's' && token[token.size() - 2] != 's') token.pop_back();
  return token;
}

const std::set<std::string>& link_words() {
  static const std::set<std::string> words = {"is", "=", "to", "of", "at", "equals", "equal", "be", "being", "was",
                                              "were", "are", "as", "set", "fixed", "becomes", "==", "around", "about",
                                              "exactly", "value", "a"};
  return words;
}

std::optional<double> number_token(const std::string& token) {
  static const std::map<std::string, double> words = {{"one", 1},  {"two", 2},   {"three", 3}, {"four", 4},
                                                      {"five", 5}, {"six", 6},   {"seven", 7}, {"eight", 8},
                                                      {"nine", 9}, {"ten", 10}};
  if (auto it = words.find(token); it != words.end()) return it->second;
  return parse_number(token);
}

/// Number following position `i` after skipping link words.
std::optional<double> number_after(const std::vector<std::string>& tokens, std::size_t i,
                                   const std::set<std::string>& skip) {
  for (std::size_t j = i + 1, skipped = 0; j < tokens.size() && skipped <= 3; ++j) {
    if (auto d = number_token(tokens[j])) return d;
    if (!skip.contains(tokens[j])) return std::nullopt;
    ++skipped;
  }
  return std::nullopt;
}

bool tokens_at(const std::vector<std::string>& tokens, std::size_t pos, const std::vector<std::string>& seq) {
  if (seq.empty() || pos + seq.size() > tokens.size()) return false;
  return std::equal(seq.begin(), seq.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
}

}  // namespace

DeterministicStrategy::DeterministicStrategy(std::vector<PromptSample> db, const DatasetMetadata& meta,
                                             const DataTable& table, double theta)
    : db_(std::move(db)), theta_(theta), action_(to_lower(meta.action_column)), outcome_(to_lower(meta.outcome_column)) {
  for (const auto& c : meta.columns) columns_[to_lower(c.name)] = c.dtype;
  for (const auto& c : meta.covariates()) {
    const auto& spec = meta.column(c);
    if (spec.dtype != Dtype::categorical || !table.has_column(c)) continue;
    for (const auto& v : distinct_values(table, c, 1000)) {
      const auto literal = render_literal(v);
      auto toks = tokenize(literal);
      if (toks.empty()) continue;
      levels_[c].push_back(toks);
      level_literals_[c].push_back(literal);
      ++level_owners_[to_lower(literal)];
      if (toks.size() == 1) level_tokens_.push_back(toks.front());
    }
  }
  std::sort(level_tokens_.begin(), level_tokens_.end());
  for (const auto& s : db_) db_tokens_.push_back(normalize(s.query));
}

std::vector<std::string> DeterministicStrategy::normalize(std::string_view query) const {
  std::set<std::string> out;
  for (auto& token : tokenize(query)) {
    if (number_token(token)) {
      out.insert("<num>");
    } else if (token == action_) {
      out.insert("<action>");
    } else if (token == outcome_) {
      out.insert("<outcome>");
    } else if (columns_.contains(token)) {
      out.insert("<col>");
    } else if (std::binary_search(level_tokens_.begin(), level_tokens_.end(), token) || token == "true" ||
               token == "false") {
      out.insert("<val>");
    } else if (!stop_words().contains(token)) {
      if (auto it = synonyms().find(token); it != synonyms().end()) token = it->second;
      token = stem(std::move(token));
      if (auto it = synonyms().find(token); it != synonyms().end()) token = it->second;
      out.insert(token);
    }
  }
  return {out.begin(), out.end()};
}

std::string DeterministicStrategy::classify_raw(std::string_view query) const {
  const auto tokens = normalize(query);
  if (tokens.empty()) return "unknown";
  double best_score = -1.0;
  std::size_t best_overlap = 0;
  const PromptSample* best = nullptr;
  for (std::size_t i = 0; i < db_.size(); ++i) {
    const auto& other = db_tokens_[i];
    std::vector<std::string> common;
    std::set_intersection(tokens.begin(), tokens.end(), other.begin(), other.end(), std::back_inserter(common));
    const std::size_t uni = tokens.size() + other.size() - common.size();
    const double score = uni ? static_cast<double>(common.size()) / static_cast<double>(uni) : 0.0;
    if (score > best_score || (score == best_score && common.size() > best_overlap)) {
      best_score = score;
      best_overlap = common.size();
      best = &db_[i];
    }
  }
  if (!best || best_score < theta_) return "unknown";
  return std::string(to_string(best->intent));
}

std::optional<std::string> DeterministicStrategy::extract_column(const std::vector<std::string>& tokens,
                                                                 const ExtractorSpec& spec) const {
  const auto name = to_lower(spec.param);
  const auto levels = levels_.find(spec.param);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] != name) continue;
    std::size_t j = i + 1;
    for (std::size_t skipped = 0; j < tokens.size() && skipped < 3 && link_words().contains(tokens[j]); ++j, ++skipped) {
    }
    if (j >= tokens.size()) continue;
    switch (spec.dtype) {
      case Dtype::numeric:
        if (auto d = parse_number(tokens[j])) return render_number(*d);
        break;
      case Dtype::boolean:
        if (auto b = parse_bool(tokens[j])) return *b ? "true" : "false";
        break;
      case Dtype::categorical:
        if (levels != levels_.end()) {
          for (std::size_t l = 0; l < levels->second.size(); ++l)
            if (tokens_at(tokens, j, levels->second[l])) return level_literals_.at(spec.param)[l];
        }
        break;
    }
  }
  // Bare category literal, when no other column shares it.
  if (spec.dtype == Dtype::categorical && levels != levels_.end()) {
    for (std::size_t l = 0; l < levels->second.size(); ++l) {
      const auto& literal = level_literals_.at(spec.param)[l];
      if (level_owners_.at(to_lower(literal)) != 1) continue;
      for (std::size_t pos = 0; pos < tokens.size(); ++pos)
        if (tokens_at(tokens, pos, levels->second[l])) return literal;
    }
  }
  return std::nullopt;
}

std::string DeterministicStrategy::extract_raw(std::string_view query, const ExtractorSpec& spec) const {
  const auto tokens = tokenize(query);
  if (spec.param == "num_rules") {
    static const std::set<std::string> triggers = {"rule", "rules", "num_rules", "leaves", "leaf", "segments"};
    static const std::set<std::string> skip = {"is", "=", "to", "of", "be", "at", "count", "number", "set", "with"};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!triggers.contains(tokens[i])) continue;
      std::optional<double> d;
      if (i > 0) d = number_token(tokens[i - 1]);
      if (!d) d = number_after(tokens, i, skip);
      if (d && *d == std::floor(*d) && *d >= 1) return render_number(*d);
    }
    return spec.null_default;
  }
  if (spec.param == "average_budget") {
    static const std::set<std::string> triggers = {"budget", "budgets", "avg_budget", "average_budget"};
    static const std::set<std::string> skip = {"is", "=", "to", "of", "be", "at", "per", "around", "about",
                                               "set", "with", "should", "limit", "cap", "a", "an"};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!triggers.contains(tokens[i])) continue;
      std::optional<double> d = number_after(tokens, i, skip);
      if (!d && i > 0) d = parse_number(tokens[i - 1]);
      if (d) return render_number(*d);
    }
    return spec.null_default;
  }
  if (spec.param == "show_error") {
    static const std::set<std::string> triggers = {"error", "errors", "error-bars", "errorbars", "error-bar",
                                                   "uncertainty", "confidence"};
    static const std::set<std::string> negations = {"without", "no", "hide", "remove", "dont", "not", "omit"};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!triggers.contains(tokens[i])) continue;
      for (std::size_t back = 1; back <= 3 && back <= i; ++back)
        if (negations.contains(tokens[i - back])) return "false";
      return "true";
    }
    return spec.null_default;
  }
  if (auto v = extract_column(tokens, spec)) return *v;
  return spec.null_default;
}

// ---------------------------------------------------------------------------
// Few-shot

FewShotStrategy::FewShotStrategy(std::vector<PromptSample> db, std::shared_ptr<Provider> provider,
                                 std::vector<ExtractorSpec> specs, int k_examples, std::uint64_t seed)
    : provider_(std::move(provider)), specs_(std::move(specs)) {
  if (!provider_) throw Error(Errc::provider_unavailable, "few-shot strategy needs a provider");
  std::vector<std::vector<std::size_t>> groups(kIntents.size());
  for (std::size_t i = 0; i < db.size(); ++i) groups[static_cast<std::size_t>(db[i].intent)].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& g : groups)
    for (std::size_t i = g.size(); i > 1; --i) std::swap(g[i - 1], g[rng() % i]);
  std::vector<std::size_t> chosen;
  const auto k = static_cast<std::size_t>(std::max(0, k_examples));
  for (std::size_t round = 0; chosen.size() < k; ++round) {
    bool any = false;
    for (const auto& g : groups) {
      if (round < g.size() && chosen.size() < k) {
        chosen.push_back(g[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  for (auto i : chosen) examples_.push_back(db[i]);
}

namespace {

std::string examples_block(const std::vector<PromptSample>& examples, const ExtractorSpec* spec) {
  std::string out;
  for (const auto& e : examples) {
    out += "command: " + e.query + "\n";
    out += spec ? expected_output(e, *spec) : std::string(to_string(e.intent));
    out += "\n\n";
  }
  return out;
}

}  // namespace

std::vector<ChatMessage> FewShotStrategy::intent_prompt(std::string_view query) const {
  return {{Role::system, intent_instruction() + "\n\n" + examples_block(examples_, nullptr)},
          {Role::user, "command: " + std::string(query)}};
}

std::vector<ChatMessage> FewShotStrategy::extractor_prompt(std::string_view query, const ExtractorSpec& spec) const {
  auto instruction = spec.init_text.empty() ? render_instruction(spec) : spec.init_text;
  const auto block = examples_block(examples_, &spec);
  if (const auto pos = instruction.find("<examples>"); pos != std::string::npos)
    instruction.replace(pos, 10, "<examples>\n" + block);
  else
    instruction += "\n\n" + block;
  return {{Role::system, instruction}, {Role::user, "command: " + std::string(query)}};
}

std::string FewShotStrategy::call(const std::vector<ChatMessage>& messages) const {
  CompletionOptions opts;
  opts.temperature = 0.0;
  opts.max_tokens = 16;
  try {
    return provider_->complete(messages, opts);
  } catch (const Error& e) {
    if (e.code() == Errc::precondition) throw;
    throw Error(Errc::provider_unavailable, e.what());
  }
}

std::string FewShotStrategy::classify_raw(std::string_view query) const {
  auto raw = call(intent_prompt(query));
  const auto parsed = parse_intent(raw);
  if (parsed == Intent::unknown && !iequals(trim(raw), "unknown")) ++malformed_;
  return raw;
}

std::string FewShotStrategy::extract_raw(std::string_view query, const ExtractorSpec& spec) const {
  auto raw = call(extractor_prompt(query, spec));
  if (!gate(raw, spec) && !iequals(trim(raw), spec.null_default) && !iequals(trim(raw), "unknown")) ++malformed_;
  return raw;
}

}  // namespace prescribe
