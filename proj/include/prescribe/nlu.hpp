#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prescribe/dataset.hpp"
#include "prescribe/llm.hpp"

namespace prescribe {

enum class Intent { select_features, show_causal_effect, run_optimize, show_current_policy, counterfactual, unknown };

inline constexpr std::array<Intent, 6> kIntents = {Intent::select_features, Intent::show_causal_effect,
                                                   Intent::run_optimize,    Intent::show_current_policy,
                                                   Intent::counterfactual,  Intent::unknown};

std::string_view to_string(Intent intent);
/// Closed-set parse: canonical names and tool aliases, case-insensitive,
/// surrounding quotes and punctuation ignored. Anything else is unknown.
Intent parse_intent(std::string_view text);

struct ExtractorSpec {
  std::string param;
  Dtype dtype = Dtype::numeric;
  std::string description;
  std::string null_default;
  std::string init_text;
  bool integer = false;
};

/// Prompt-facing sentinel per dtype: "-1" for numbers, "Unknown" otherwise.
std::string null_default_for(Dtype dtype);
/// Column-extractor instruction with "<examples>" left as the final line.
std::string render_instruction(const ExtractorSpec& spec);
/// Instruction used by the intent classifier.
std::string intent_instruction();

/// One spec per supported covariate, then num_rules, average_budget and
/// show_error.
std::vector<ExtractorSpec> extractor_specs(const DatasetMetadata& meta);
std::vector<ExtractorSpec> extractor_specs(const DatasetMetadata& meta, const std::vector<std::string>& columns);

using ParamValues = std::map<std::string, std::optional<Value>>;

struct PromptSample {
  std::string query;
  Intent intent = Intent::unknown;
  ParamValues params;
};

json to_json(const PromptSample& sample);
PromptSample sample_from_json(const json& j);
std::vector<PromptSample> parse_prompt_db(std::string_view jsonl);
std::string render_prompt_db(const std::vector<PromptSample>& db);

/// Expected output of an extractor for a sample: the canonical literal, or
/// the sentinel when absent.
std::string expected_output(const PromptSample& sample, const ExtractorSpec& spec);

struct Extraction {
  ParamValues values;
  std::map<std::string, double> latencies;  // seconds
  std::vector<std::string> errors;

  ValueMap present() const;
};

/// Produces raw text; every output passes through the closed-set and dtype
/// gates before use.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::string name() const = 0;
  virtual std::string classify_raw(std::string_view query) const = 0;
  virtual std::string extract_raw(std::string_view query, const ExtractorSpec& spec) const = 0;
};

/// Parses a raw extractor output under the extractor's dtype; sentinels and
/// anything unparseable are absent.
std::optional<Value> gate(std::string_view raw, const ExtractorSpec& spec);
/// "<lo>-<hi>" pair with either side possibly a sentinel ("Unknown-800").
std::pair<std::optional<double>, std::optional<double>> parse_numeric_pair(std::string_view raw);

Intent classify_intent(std::string_view query, const Strategy& strategy);
std::optional<Value> extract_param(std::string_view query, const ExtractorSpec& spec, const Strategy& strategy);
/// Runs every extractor (concurrently when `parallel`); provider failures are
/// recorded in `errors` with the value left absent.
Extraction extract_all(std::string_view query, const std::vector<ExtractorSpec>& specs, const Strategy& strategy,
                       bool parallel = true);

/// Offline matcher: intents by normalised token overlap against the prompt
/// database, parameters by pattern rules.
class DeterministicStrategy : public Strategy {
 public:
  static constexpr double kDefaultTheta = 0.35;

  DeterministicStrategy(std::vector<PromptSample> db, const DatasetMetadata& meta, const DataTable& table,
                        double theta = kDefaultTheta);

  std::string name() const override { return "deterministic"; }
  std::string classify_raw(std::string_view query) const override;
  std::string extract_raw(std::string_view query, const ExtractorSpec& spec) const override;

  /// Token set used for intent matching.
  std::vector<std::string> normalize(std::string_view query) const;

 private:
  std::optional<std::string> extract_column(const std::vector<std::string>& tokens, const ExtractorSpec& spec) const;

  std::vector<PromptSample> db_;
  std::vector<std::vector<std::string>> db_tokens_;
  double theta_;
  std::string action_;
  std::string outcome_;
  std::map<std::string, Dtype> columns_;                              // lowercase name -> dtype
  std::map<std::string, std::vector<std::vector<std::string>>> levels_;  // column -> tokenised levels
  std::map<std::string, std::vector<std::string>> level_literals_;    // column -> canonical levels
  std::map<std::string, int> level_owners_;                           // lowercase level -> #columns
  std::vector<std::string> level_tokens_;
};

/// Few-shot prompting through a provider, with examples drawn once from the
/// shared prompt database (stratified by intent, seeded).
class FewShotStrategy : public Strategy {
 public:
  static constexpr int kDefaultExamples = 16;

  FewShotStrategy(std::vector<PromptSample> db, std::shared_ptr<Provider> provider,
                  std::vector<ExtractorSpec> specs, int k_examples = kDefaultExamples, std::uint64_t seed = 0);

  std::string name() const override { return "fewshot"; }
  std::string classify_raw(std::string_view query) const override;
  std::string extract_raw(std::string_view query, const ExtractorSpec& spec) const override;

  const std::vector<PromptSample>& examples() const noexcept { return examples_; }
  std::vector<ChatMessage> intent_prompt(std::string_view query) const;
  std::vector<ChatMessage> extractor_prompt(std::string_view query, const ExtractorSpec& spec) const;
  /// Completions that failed the closed-set or dtype gate.
  std::size_t malformed() const noexcept { return malformed_.load(); }

 private:
  std::string call(const std::vector<ChatMessage>& messages) const;

  std::vector<PromptSample> examples_;
  std::shared_ptr<Provider> provider_;
  std::vector<ExtractorSpec> specs_;
  mutable std::atomic<std::size_t> malformed_{0};
};

/// Lowercased word tokens; decimals and hyphenated words stay whole.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace prescribe
