#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "prescribe/dataset.hpp"

namespace prescribe {

struct Fixture {
  DatasetMetadata meta;
  DataTable table;
  std::string csv;
};

/// Synthetic bank telemarketing data with the UCI column names.
///
/// Structural model, per row:
///   euribor3m  drawn from eight rates; 4.964 is the most frequent and row 0
///   age        uniform 18..80
///   job        uniform over eight levels
///   loan       true with probability 0.3
///   CAMPAIGN   calls, uniform 0..6 when euribor3m >= 4, else 0..3
///   CONVERSION Bernoulli(p) with
///     p = 0.01 + 0.10 [euribor3m < 2] + 0.05 [job in {retired, student}]
///         - 0.06 loan + g(CAMPAIGN), clipped below at 0
///     g(c) = 0.018 c           when euribor3m >= 4
///     g(c) = 0.035 c - 0.006 c^2 otherwise
///     and g is scaled by 0.3 for loan holders
/// CAMPAIGN is confounded with euribor3m; the cost of an action is its
/// number of calls.
Fixture bank_fixture(std::size_t n = 2000, std::uint64_t seed = 7);

/// Y = 2A + 3 X1 with A uniform on {0,1,2,3} and X1 on {0,1,2}, independent.
Fixture noiseless_scm(std::size_t n = 2000, std::uint64_t seed = 11);

/// Binary X1, P(A=1 | X1) = 0.2 + 0.6 X1, Y = X1 + N(0, 0.1^2). A has no
/// effect on Y.
Fixture confounded_scm(std::size_t n = 5000, std::uint64_t seed = 13);

std::string to_csv(const DataTable& table);

/// Writes data.csv and metadata.json into `dir`; returns the metadata path.
std::filesystem::path write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

/// Scripted-provider rules (JSONL) for the bank walkthrough.
std::string demo_script();

}  // namespace prescribe
