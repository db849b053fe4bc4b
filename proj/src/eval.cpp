#include "prescribe/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <set>

#include "prescribe/error.hpp"

namespace prescribe {

namespace {

const std::map<std::string, std::vector<std::string>>& lexicon() {
  static const std::map<std::string, std::vector<std::string>> words = {
      {"show", {"display", "present", "give me"}},
      {"best", {"optimal", "ideal"}},
      {"important", {"significant", "relevant", "key"}},
      {"features", {"variables", "factors"}},
      {"feature", {"variable"}},
      {"effect", {"impact"}},
      {"affect", {"impact", "influence"}},
      {"current", {"existing", "present"}},
      {"optimize", {"improve", "optimise"}},
      {"plot", {"graph", "chart"}},
      {"select", {"choose", "pick"}},
      {"find", {"identify", "get"}},
      {"run", {"execute", "start"}},
      {"use", {"apply", "go with"}},
      {"predict", {"forecast", "estimate"}},
      {"matter", {"count"}},
      {"policy", {"policy"}},
      {"hello", {"hi"}},
  };
  return words;
}

const std::vector<std::string> kQuestionPrefixes = {"Quick question: ", "I was wondering, ", "Hey, ", "So, "};
const std::vector<std::string> kCommandPrefixes = {"Please ", "Could you ", "Can you ", "Kindly ", "I'd like you to "};
const std::vector<std::string> kSuffixes = {" please", ", thanks", " for me", " if possible"};

bool is_question(std::string_view q) {
  static const std::set<std::string> starters = {"what", "how", "which", "is", "does", "do", "can", "who", "why",
                                                 "are", "suppose", "hello"};
  const auto tokens = tokenize(q);
  return !tokens.empty() && starters.contains(tokens.front());
}

/// Words that must survive verbatim: gold values plus every identifier-like
/// token (anything with a digit, underscore or uppercase letter).
std::set<std::string> protected_words(const PromptSample& s) {
  std::set<std::string> out;
  for (const auto& [name, value] : s.params) {
    out.insert(to_lower(name));
    if (value)
      for (const auto& t : tokenize(render_literal(*value))) out.insert(t);
  }
  return out;
}

struct Word {
  std::string text;   // original spelling
  std::string trail;  // punctuation and spaces following it
};

std::vector<Word> split_words(const std::string& q) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < q.size()) {
    std::size_t j = i;
    while (j < q.size() && !std::isspace(static_cast<unsigned char>(q[j]))) ++j;
    std::string token = q.substr(i, j - i);
    std::string trail;
    while (!token.empty() && std::string_view("?!.,;:").find(token.back()) != std::string_view::npos &&
           !(token.size() > 1 && std::isdigit(static_cast<unsigned char>(token[token.size() - 2])) && token.back() == '.' &&
             j < q.size())) {
      trail.insert(trail.begin(), token.back());
      token.pop_back();
    }
    std::size_t k = j;
    while (k < q.size() && std::isspace(static_cast<unsigned char>(q[k]))) ++k;
    trail += q.substr(j, k - j);
    out.push_back({token, trail});
    i = k;
  }
  return out;
}

std::string join_words(const std::vector<Word>& words) {
  std::string out;
  for (const auto& w : words) out += w.text + w.trail;
  return out;
}

/// Digits or underscores anywhere, or uppercase past the first letter.
bool identifier_like(const std::string& w) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto c = static_cast<unsigned char>(w[i]);
    if (std::isdigit(c) || c == '_' || (i > 0 && std::isupper(c))) return true;
  }
  return false;
}

/// Lowercases the first letter unless the first word reads as an identifier.
void lower_first(std::string& q, const std::set<std::string>& guard) {
  const auto word = q.substr(0, q.find(' '));
  if (word.empty() || identifier_like(word) || guard.contains(to_lower(word))) return;
  q[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(q[0])));
}

std::string perturb_one(const PromptSample& s, std::mt19937_64& rng) {
  auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto coin = [&rng](double p) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p; };
  const auto guard = protected_words(s);
  std::string q = s.query;

  // Clause reordering: "A when B?" -> "When B, A?"
  if (const auto pos = q.find(" when "); pos != std::string::npos && coin(0.6)) {
    std::string head = q.substr(0, pos);
    std::string tail = q.substr(pos + 6);
    std::string end;
    while (!tail.empty() && std::string_view("?!.").find(tail.back()) != std::string_view::npos) {
      end.insert(end.begin(), tail.back());
      tail.pop_back();
    }
    lower_first(head, guard);
    q = "When " + tail + ", " + head + end;
  }

  // Synonym substitution on unprotected words.
  auto words = split_words(q);
  for (auto& w : words) {
    const auto lower = to_lower(w.text);
    if (guard.contains(lower) || identifier_like(w.text)) continue;
    auto it = lexicon().find(lower);
    if (it == lexicon().end() || !coin(0.55)) continue;
    std::string replacement = it->second[pick(it->second.size())];
    if (std::isupper(static_cast<unsigned char>(w.text[0])))
      replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
    w.text = replacement;
  }
  q = join_words(words);

  // Politeness.
  const double r = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  if (r < 0.35) {
    const auto& prefixes = is_question(q) ? kQuestionPrefixes : kCommandPrefixes;
    lower_first(q, guard);
    q = prefixes[pick(prefixes.size())] + q;
  } else if (r < 0.6) {
    std::string end;
    while (!q.empty() && std::string_view("?!.").find(q.back()) != std::string_view::npos) {
      end.insert(end.begin(), q.back());
      q.pop_back();
    }
    q += kSuffixes[pick(kSuffixes.size())] + end;
  }

  // Punctuation and case jitter.
  if (coin(0.4)) {
    while (!q.empty() && std::string_view("?!.").find(q.back()) != std::string_view::npos) q.pop_back();
    static const std::vector<std::string> ends = {"", "?", "!!", "...", " ?"};
    q += ends[pick(ends.size())];
  }
  if (coin(0.3)) lower_first(q, guard);

  if (q == s.query) {
    if (!q.empty() && std::string_view("?!.").find(q.back()) != std::string_view::npos) q.back() = q.back() == '?' ? '!' : '?';
    else q += "?";
  }
  return q;
}

}  // namespace

std::vector<PromptSample> perturb_queries(const std::vector<PromptSample>& db, std::uint64_t seed,
                                          std::size_t n_target) {
  if (db.empty()) throw Error(Errc::precondition, "empty prompt database");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(db.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<PromptSample> out;
  out.reserve(n_target);
  while (out.size() < n_target) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (auto idx : order) {
      if (out.size() >= n_target) break;
      PromptSample p = db[idx];
      p.query = perturb_one(db[idx], rng);
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

MetricsReport metrics_from_predictions(const std::vector<Intent>& gold, const std::vector<Intent>& predicted) {
  if (gold.size() != predicted.size()) throw Error(Errc::precondition, "gold and predictions differ in length");
  const std::size_t K = kIntents.size();
  MetricsReport r;
  r.n = gold.size();
  r.confusion.assign(K, std::vector<std::size_t>(K, 0));
  for (std::size_t i = 0; i < gold.size(); ++i)
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
  for (std::size_t k = 0; k < K; ++k) r.correct += r.confusion[k][k];
  r.accuracy = r.n ? static_cast<double>(r.correct) / static_cast<double>(r.n) : 0.0;

  const auto unknown = static_cast<std::size_t>(Intent::unknown);
  std::size_t unknown_support = 0;
  for (std::size_t p = 0; p < K; ++p) unknown_support += r.confusion[unknown][p];
  double ps = 0.0, rs = 0.0, fs = 0.0;
  std::size_t classes = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (k == unknown && unknown_support == 0) continue;
    r.classes.emplace_back(to_string(kIntents[k]));
    std::size_t tp = r.confusion[k][k], col = 0, row = 0;
    for (std::size_t j = 0; j < K; ++j) {
      col += r.confusion[j][k];
      row += r.confusion[k][j];
    }
    const double precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    ps += precision;
    rs += recall;
    fs += f1;
    ++classes;
  }
  r.precision_macro = ps / static_cast<double>(classes);
  r.recall_macro = rs / static_cast<double>(classes);
  r.f1_macro = fs / static_cast<double>(classes);
  return r;
}

std::string format_accuracy(const MetricsReport& report) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f (%zu/%zu)", report.accuracy, report.correct, report.n);
  return buf;
}

MetricsReport evaluate_intent(const Strategy& strategy, const std::vector<PromptSample>& testset) {
  if (testset.empty()) throw Error(Errc::precondition, "empty test set");
  std::vector<Intent> gold, predicted;
  double latency = 0.0;
  for (const auto& s : testset) {
    const auto start = std::chrono::steady_clock::now();
    predicted.push_back(classify_intent(s.query, strategy));
    latency += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    gold.push_back(s.intent);
  }
  auto r = metrics_from_predictions(gold, predicted);
  r.strategy = strategy.name();
  r.mean_latency = latency / static_cast<double>(testset.size());
  return r;
}

MetricsReport evaluate_extractors(const Strategy& strategy, const std::vector<ExtractorSpec>& specs,
                                  const std::vector<PromptSample>& testset) {
  if (testset.empty()) throw Error(Errc::precondition, "empty test set");
  MetricsReport r;
  r.strategy = strategy.name();
  r.n = testset.size();
  double latency = 0.0;
  double total = 0.0;
  for (const auto& spec : specs) {
    std::size_t hits = 0;
    for (const auto& s : testset) {
      const auto start = std::chrono::steady_clock::now();
      const auto value = extract_param(s.query, spec, strategy);
      latency += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto got = value ? render_literal(*value) : spec.null_default;
      if (got == expected_output(s, spec)) ++hits;
    }
    const double rate = static_cast<double>(hits) / static_cast<double>(testset.size());
    r.extractor_rates[spec.param] = rate;
    total += rate;
  }
  r.extractor_mean = specs.empty() ? 0.0 : total / static_cast<double>(specs.size());
  r.mean_latency = specs.empty() ? 0.0 : latency / static_cast<double>(specs.size() * testset.size());
  return r;
}

json to_json(const MetricsReport& r) {
  return {{"strategy", r.strategy},
          {"n", r.n},
          {"correct", r.correct},
          {"accuracy", r.accuracy},
          {"accuracy_display", format_accuracy(r)},
          {"f1_macro", r.f1_macro},
          {"precision_macro", r.precision_macro},
          {"recall_macro", r.recall_macro},
          {"averaging", r.averaging},
          {"classes", r.classes},
          {"confusion", r.confusion},
          {"mean_latency_s", r.mean_latency},
          {"extractor_rates", r.extractor_rates},
          {"extractor_mean", r.extractor_mean}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.correct = j.at("correct").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.f1_macro = j.at("f1_macro").get<double>();
  r.precision_macro = j.at("precision_macro").get<double>();
  r.recall_macro = j.at("recall_macro").get<double>();
  r.averaging = j.value("averaging", "macro");
  r.classes = j.at("classes").get<std::vector<std::string>>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.mean_latency = j.at("mean_latency_s").get<double>();
  r.extractor_rates = j.value("extractor_rates", std::map<std::string, double>{});
  r.extractor_mean = j.value("extractor_mean", 0.0);
  return r;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string emit_report(const std::vector<MetricsReport>& reports, std::string_view format) {
  if (format == "json") {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    return json{{"reports", arr}}.dump(2) + "\n";
  }
  if (format == "markdown") {
    std::string out = "| Strategy | Accuracy | F1 Score | Precision | Recall | Inference Time | Extractor exact match |\n"
                      "|---|---|---|---|---|---|---|\n";
    for (const auto& r : reports) {
      out += "| " + r.strategy + " | " + format_accuracy(r) + " | " + fixed(r.f1_macro, 2) + " | " +
             fixed(r.precision_macro, 2) + " | " + fixed(r.recall_macro, 2) + " | " + fixed(r.mean_latency, 2) + "s | " +
             (r.extractor_rates.empty() ? std::string("-") : fixed(r.extractor_mean, 3)) + " |\n";
    }
    out += "\nMetrics are " + (reports.empty() ? std::string("macro") : reports.front().averaging) +
           "-averaged over the intent classes.\n";
    for (const auto& r : reports) {
      out += "\n### Confusion matrix: " + r.strategy + " (rows gold, columns predicted)\n\n| |";
      for (auto i : kIntents) out += " " + std::string(to_string(i)) + " |";
      out += "\n|---|";
      for (std::size_t i = 0; i < kIntents.size(); ++i) out += "---|";
      out += "\n";
      for (std::size_t g = 0; g < r.confusion.size(); ++g) {
        out += "| " + std::string(to_string(kIntents[g])) + " |";
        for (auto c : r.confusion[g]) out += " " + std::to_string(c) + " |";
        out += "\n";
      }
      if (!r.extractor_rates.empty()) {
        out += "\n| Extractor | Exact match |\n|---|---|\n";
        for (const auto& [name, rate] : r.extractor_rates) out += "| " + name + " | " + fixed(rate, 3) + " |\n";
      }
    }
    return out;
  }
  if (format == "csv") {
    std::string out = "strategy,n,correct,accuracy,f1_macro,precision_macro,recall_macro,mean_latency_s,extractor_mean\n";
    for (const auto& r : reports) {
      out += r.strategy + "," + std::to_string(r.n) + "," + std::to_string(r.correct) + "," + render_number(r.accuracy) +
             "," + render_number(r.f1_macro) + "," + render_number(r.precision_macro) + "," +
             render_number(r.recall_macro) + "," + render_number(r.mean_latency) + "," + render_number(r.extractor_mean) +
             "\n";
    }
    return out;
  }
  throw Error(Errc::unsupported_format, std::string(format));
}

}  // namespace prescribe
