#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "prescribe/dataset.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("prescribe_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Metadata for small inline tables: numeric action "A", outcome "Y" with
/// the given dtype, plus the listed covariates.
inline prescribe::DatasetMetadata small_meta(
    std::vector<std::pair<std::string, prescribe::Dtype>> covariates,
    prescribe::Dtype outcome = prescribe::Dtype::numeric) {
  prescribe::DatasetMetadata meta;
  meta.title = "Small";
  meta.path = "inline.csv";
  meta.action_column = "A";
  meta.outcome_column = "Y";
  for (auto& [name, dtype] : covariates) meta.columns.push_back({name, dtype, name + " column"});
  meta.columns.push_back({"A", prescribe::Dtype::numeric, "action"});
  meta.columns.push_back({"Y", outcome, "outcome"});
  return meta;
}

}  // namespace testing_support
