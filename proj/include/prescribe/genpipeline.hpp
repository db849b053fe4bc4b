#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prescribe/dataset.hpp"
#include "prescribe/nlu.hpp"

namespace prescribe {

struct Hyperparams {
  int gradient_accumulation_steps = 16;
  double learning_rate = 0.3;
  int num_virtual_tokens = 500;
};

struct ModelConfig {
  std::string param;  // "intent" for the classifier
  std::string dtype;  // column dtype, or "intent"
  std::string base_model = "google/flan-t5-xl";
  std::string init_method = "text";
  std::string init_text;
  Hyperparams hyperparams;
};

json to_json(const ModelConfig& config);

inline constexpr std::size_t kDefaultTargetCount = 100;

/// Fixed domain-agnostic samples followed by seeded instantiations of the
/// placeholder templates. Every sample carries a value slot for each of
/// `columns` and each system parameter. Throws no_supported_columns.
std::vector<PromptSample> generate_prompt_database(const DatasetMetadata& meta, const DataTable& table,
                                                   const std::vector<std::string>& columns, std::uint64_t seed,
                                                   std::size_t target = kDefaultTargetCount);

struct TrainingLine {
  std::string input;
  std::string output;
};

/// One file per extractor plus "intent"; line i of each file is db[i].
std::map<std::string, std::vector<TrainingLine>> split_training_files(const std::vector<PromptSample>& db,
                                                                      const std::vector<ExtractorSpec>& specs);

std::vector<ModelConfig> generate_model_configs(const std::vector<ExtractorSpec>& specs);

std::string render_system_prompt(const DatasetMetadata& meta);

struct SetupBundle {
  std::filesystem::path dir;
  std::vector<std::string> files;  // relative to dir, sorted
  std::vector<std::string> columns;
  std::string digest;
};

struct SetupOptions {
  std::uint64_t seed = 0;
  std::size_t target = kDefaultTargetCount;
};

/// Writes prompt_db.jsonl, train/<param>.jsonl, configs/<param>.json,
/// system_prompt.txt, metadata.json and manifest.json under `out`.
/// Byte-identical for identical inputs and seed. Throws io_error.
SetupBundle run_setup(const DatasetMetadata& meta, const DataTable& table, const std::vector<std::string>& columns,
                      const std::filesystem::path& out, const SetupOptions& options = {});

/// Digest over relative paths and contents of every file under `dir`.
std::string directory_digest(const std::filesystem::path& dir);

/// Everything a session needs, read back from a bundle directory.
struct LoadedBundle {
  std::filesystem::path dir;
  DatasetMetadata meta;  // supported flags reflect the selected columns
  std::vector<std::string> columns;
  std::vector<PromptSample> db;
  std::vector<ExtractorSpec> specs;
  std::string system_prompt;
  std::filesystem::path data_path;
  std::uint64_t seed = 0;
};

LoadedBundle load_bundle(const std::filesystem::path& dir);

}  // namespace prescribe
