#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prescribe/causal.hpp"
#include "prescribe/chart.hpp"
#include "prescribe/dataset.hpp"

namespace prescribe {

/// Row test at an internal node. Rows passing the test take the "yes" branch;
/// rows with a missing cell always take "no".
struct Predicate {
  enum class Kind { threshold, membership };

  std::string column;
  Kind kind = Kind::threshold;
  double threshold = 0.0;            // x <= threshold
  std::vector<std::string> members;  // literal in members

  bool test(const Cell& cell) const;
  std::string label() const;
};

struct PolicyNode {
  std::optional<Predicate> split;
  int yes = -1;
  int no = -1;
  int parent = -1;
  std::size_t action = 0;  // leaves only: index into PolicyTree::action_labels
  std::size_t coverage = 0;
};

struct PolicyTree {
  std::vector<PolicyNode> nodes;  // nodes[0] is the root
  std::vector<std::string> features;
  std::vector<std::string> action_labels;
  std::vector<double> action_costs;
  ActionLevels levels;

  std::size_t num_rules() const;
  bool is_leaf(std::size_t node) const { return !nodes[node].split.has_value(); }
  std::size_t leaf_of(const DataTable& table, std::size_t row) const;
};

struct OptimizationResult {
  PolicyTree tree;
  double projected_kpi = 0.0;
  double baseline_kpi = 0.0;
  double budget_used = 0.0;
  double average_budget = 0.0;
  std::vector<std::pair<std::string, double>> action_distribution;
  /// Some leaf lacked rows for an action and inherited the parent's estimate.
  bool used_fallback = false;
};

inline constexpr std::size_t kMinLeafRows = 5;

/// Per-level cost: metadata.action_costs when present, else the level's
/// numeric value. Throws non_numeric_action_without_costs.
std::vector<double> action_costs(const ActionLevels& levels, const DatasetMetadata& meta);

/// Exact budgeted leaf assignment: maximise sum_l w[l] * q[l][a_l] subject to
/// sum_l w[l] * cost[a_l] <= budget. Returns the chosen action per leaf and
/// the objective, or nullopt when no assignment fits.
struct Assignment {
  std::vector<std::size_t> actions;
  double value = 0.0;
  double cost = 0.0;
};
std::optional<Assignment> assign_actions(std::span<const double> weights, const std::vector<std::vector<double>>& q,
                                         std::span<const double> costs, double budget);

OptimizationResult learn_policy(const DataTable& table, const DatasetMetadata& meta,
                                std::span<const std::string> features, int num_rules, double average_budget,
                                std::uint64_t seed = 0);

OptimizationResult evaluate_policy(const PolicyTree& tree, const DataTable& table, const DatasetMetadata& meta);

ChartSpec render_tree(const PolicyTree& tree);
ChartSpec distribution_chart(const OptimizationResult& result, const DatasetMetadata& meta);

json to_json(const PolicyTree& tree);
json to_json(const OptimizationResult& result);

}  // namespace prescribe
