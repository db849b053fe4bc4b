#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prescribe/nlu.hpp"

namespace prescribe {

/// Seeded, label-preserving rewrites of prompt-database queries: synonym
/// substitution, politeness prefixes and suffixes, punctuation and case
/// jitter, and clause reordering around "when". Gold values and column names
/// are never touched. Returns exactly `n_target` queries.
std::vector<PromptSample> perturb_queries(const std::vector<PromptSample>& db, std::uint64_t seed,
                                          std::size_t n_target);

struct MetricsReport {
  std::string strategy;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  /// confusion[gold][predicted], indexed like kIntents.
  std::vector<std::vector<std::size_t>> confusion;
  /// Classes entering the macro average.
  std::vector<std::string> classes;
  double mean_latency = 0.0;  // seconds
  std::map<std::string, double> extractor_rates;
  double extractor_mean = 0.0;
  std::string averaging = "macro";
};

MetricsReport metrics_from_predictions(const std::vector<Intent>& gold, const std::vector<Intent>& predicted);

/// "0.95 (226/238)"
std::string format_accuracy(const MetricsReport& report);

MetricsReport evaluate_intent(const Strategy& strategy, const std::vector<PromptSample>& testset);
/// Exact match on canonical literals, absent counting as a value.
MetricsReport evaluate_extractors(const Strategy& strategy, const std::vector<ExtractorSpec>& specs,
                                  const std::vector<PromptSample>& testset);

json to_json(const MetricsReport& report);
MetricsReport report_from_json(const json& j);

/// json, markdown or csv. Throws unsupported_format.
std::string emit_report(const std::vector<MetricsReport>& reports, std::string_view format);

}  // namespace prescribe
