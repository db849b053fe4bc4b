#include "prescribe/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "prescribe/error.hpp"

namespace prescribe {

namespace {

constexpr double kBudgetSlack = 1e-12;
constexpr double kImprovement = 1e-12;

}  // namespace

bool Predicate::test(const Cell& cell) const {
  if (!cell) return false;
  if (kind == Kind::threshold) {
    if (const auto* d = std::get_if<double>(&*cell)) return *d <= threshold;
    if (const auto* b = std::get_if<bool>(&*cell)) return (*b ? 1.0 : 0.0) <= threshold;
    return false;
  }
  const auto literal = render_literal(*cell);
  return std::find(members.begin(), members.end(), literal) != members.end();
}

std::string Predicate::label() const {
  if (kind == Kind::threshold) return column + " ≤ " + format_significant(threshold, 3);
  std::string out = column + " ∈ {";
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out += ", ";
    out += members[i];
  }
  return out + "}";
}

std::size_t PolicyTree::num_rules() const {
  std::size_t leaves = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (is_leaf(i)) ++leaves;
  return leaves;
}

std::size_t PolicyTree::leaf_of(const DataTable& table, std::size_t row) const {
  std::size_t node = 0;
  while (!is_leaf(node)) {
    const auto& split = *nodes[node].split;
    const bool yes = split.test(table.column(split.column).cells[row]);
    node = static_cast<std::size_t>(yes ? nodes[node].yes : nodes[node].no);
  }
  return node;
}

std::vector<double> action_costs(const ActionLevels& levels, const DatasetMetadata& meta) {
  std::vector<double> costs(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& label = levels.labels()[l];
    if (!meta.action_costs.empty()) {
      auto it = meta.action_costs.find(label);
      if (it == meta.action_costs.end())
        throw Error(Errc::invalid_metadata, "no cost given for action level " + label);
      costs[l] = it->second;
    } else if (levels.numeric()) {
      costs[l] = levels.values()[l];
    } else {
      throw Error(Errc::non_numeric_action_without_costs,
                  "action column " + meta.action_column + " is not numeric and metadata has no action_costs");
    }
  }
  return costs;
}

std::optional<Assignment> assign_actions(std::span<const double> weights, const std::vector<std::vector<double>>& q,
                                         std::span<const double> costs, double budget) {
  // Pareto frontier over (cost, value); dominated partial assignments are
  // dropped after each leaf.
  std::vector<Assignment> frontier{Assignment{}};
  for (std::size_t leaf = 0; leaf < weights.size(); ++leaf) {
    std::vector<Assignment> next;
    next.reserve(frontier.size() * costs.size());
    for (const auto& state : frontier) {
      for (std::size_t a = 0; a < costs.size(); ++a) {
        Assignment s = state;
        s.cost += weights[leaf] * costs[a];
        s.value += weights[leaf] * q[leaf][a];
        if (s.cost > budget + kBudgetSlack) continue;
        s.actions.push_back(a);
        next.push_back(std::move(s));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Assignment& x, const Assignment& y) {
      if (x.cost != y.cost) return x.cost < y.cost;
      return x.value > y.value;
    });
    frontier.clear();
    double best = -std::numeric_limits<double>::infinity();
    for (auto& s : next) {
      if (s.value > best) {
        best = s.value;
        frontier.push_back(std::move(s));
      }
    }
    if (frontier.empty()) return std::nullopt;
  }
  // The frontier is increasing in both cost and value; the last entry is the
  // best feasible assignment.
  return frontier.back();
}

namespace {

struct Context {
  const DataTable& table;
  std::vector<double> y;
  std::vector<int> level;
  Strata strata;
  std::size_t n_levels;
  double global_mean;
};

Context make_context(const DataTable& table, const DatasetMetadata& meta, const ActionLevels& levels,
                     std::span<const std::string> features) {
  Context ctx{table, outcome_values(table, meta), levels.assign(table, meta.action_column), stratify(table, features),
              levels.size(), 0.0};
  double total = 0.0;
  for (double v : ctx.y) total += v;
  ctx.global_mean = ctx.y.empty() ? 0.0 : total / static_cast<double>(ctx.y.size());
  return ctx;
}

/// Standardised per-action means on `rows`; unsupported actions inherit
/// `parent` (or the global mean at the root).
std::vector<double> segment_q(const Context& ctx, std::span<const std::size_t> rows,
                              const std::vector<double>* parent, bool& fallback) {
  auto q = standardized_means(ctx.y, ctx.level, ctx.strata.id, rows, ctx.n_levels, ctx.strata.count);
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (std::isfinite(q[a])) continue;
    q[a] = parent ? (*parent)[a] : ctx.global_mean;
    fallback = true;
  }
  return q;
}

std::vector<Predicate> candidates(const DataTable& table, std::span<const std::string> features,
                                  std::span<const std::size_t> rows) {
  std::vector<Predicate> out;
  for (const auto& f : features) {
    const auto& col = table.column(f);
    if (col.spec.dtype == Dtype::numeric) {
      std::vector<double> v;
      for (auto r : rows)
        if (col.cells[r])
          if (const auto* d = std::get_if<double>(&*col.cells[r])) v.push_back(*d);
      if (v.empty()) continue;
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      std::vector<double> edges;
      for (std::size_t k = 0; k <= CovariateBinning::kQuantileBins; ++k) {
        const double e = v[std::min(n - 1, k * n / CovariateBinning::kQuantileBins)];
        if (edges.empty() || e != edges.back()) edges.push_back(e);
      }
      if (edges.back() != v.back()) edges.push_back(v.back());
      for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        Predicate p;
        p.column = f;
        p.kind = Predicate::Kind::threshold;
        p.threshold = (edges[i] + edges[i + 1]) / 2.0;
        out.push_back(std::move(p));
      }
    } else {
      std::set<std::string> levels;
      for (auto r : rows)
        if (col.cells[r]) levels.insert(render_literal(*col.cells[r]));
      if (levels.size() < 2) continue;
      // With two levels the second one-vs-rest split is the complement of
      // the first.
      const std::size_t usable = levels.size() == 2 ? 1 : levels.size();
      std::size_t i = 0;
      for (const auto& l : levels) {
        if (i++ == usable) break;
        Predicate p;
        p.column = f;
        p.kind = Predicate::Kind::membership;
        p.members = {l};
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

struct Growth {
  std::vector<PolicyNode> nodes;
  std::vector<std::vector<std::size_t>> rows;
  std::vector<std::vector<double>> q;
  bool fallback = false;

  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!nodes[i].split) out.push_back(i);
    return out;
  }
};

}  // namespace

OptimizationResult learn_policy(const DataTable& table, const DatasetMetadata& meta,
                                std::span<const std::string> features, int num_rules, double average_budget,
                                [[maybe_unused]] std::uint64_t seed) {
  if (num_rules < 1) throw Error(Errc::too_few_rules, "num_rules must be at least 1");
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no rows");
  for (const auto& f : features)
    if (!table.has_column(f)) throw Error(Errc::unknown_column, f);

  PolicyTree tree;
  tree.features.assign(features.begin(), features.end());
  tree.levels = ActionLevels::fit(table, meta);
  tree.action_labels = tree.levels.labels();
  tree.action_costs = action_costs(tree.levels, meta);
  const double min_cost = *std::min_element(tree.action_costs.begin(), tree.action_costs.end());
  if (min_cost > average_budget + kBudgetSlack)
    throw Error(Errc::infeasible_budget, "the cheapest action costs " + format_significant(min_cost) +
                                             ", above the budget of " + format_significant(average_budget));

  const auto ctx = make_context(table, meta, tree.levels, features);
  const double n = static_cast<double>(table.row_count());

  Growth g;
  g.nodes.push_back(PolicyNode{});
  g.rows.emplace_back(table.row_count());
  for (std::size_t r = 0; r < table.row_count(); ++r) g.rows[0][r] = r;
  g.q.push_back(segment_q(ctx, g.rows[0], nullptr, g.fallback));

  auto objective = [&](const std::vector<double>& w, const std::vector<std::vector<double>>& q) {
    return assign_actions(w, q, tree.action_costs, average_budget);
  };

  while (static_cast<int>(g.leaves().size()) < num_rules) {
    const auto leaves = g.leaves();
    std::vector<double> w;
    std::vector<std::vector<double>> q;
    for (auto l : leaves) {
      w.push_back(static_cast<double>(g.rows[l].size()) / n);
      q.push_back(g.q[l]);
    }
    const double current = objective(w, q)->value;

    struct Best {
      std::size_t leaf_pos = 0;
      Predicate split;
      std::vector<std::size_t> yes, no;
      std::vector<double> q_yes, q_no;
      bool fallback = false;
      double value = -std::numeric_limits<double>::infinity();
    };
    std::optional<Best> best;
    for (std::size_t pos = 0; pos < leaves.size(); ++pos) {
      const auto node = leaves[pos];
      for (auto& cand : candidates(table, features, g.rows[node])) {
        const auto& col = table.column(cand.column);
        std::vector<std::size_t> yes, no;
        for (auto r : g.rows[node]) (cand.test(col.cells[r]) ? yes : no).push_back(r);
        if (yes.size() < kMinLeafRows || no.size() < kMinLeafRows) continue;
        bool fb = false;
        auto q_yes = segment_q(ctx, yes, &g.q[node], fb);
        auto q_no = segment_q(ctx, no, &g.q[node], fb);
        auto w2 = w;
        auto qq = q;
        w2[pos] = static_cast<double>(yes.size()) / n;
        qq[pos] = q_yes;
        w2.push_back(static_cast<double>(no.size()) / n);
        qq.push_back(q_no);
        const auto assigned = objective(w2, qq);
        if (!assigned) continue;
        if (!best || assigned->value > best->value) {
          best = Best{pos, std::move(cand), std::move(yes), std::move(no), std::move(q_yes), std::move(q_no), fb,
                      assigned->value};
        }
      }
    }
    if (!best || best->value <= current + kImprovement) break;

    const auto node = leaves[best->leaf_pos];
    const int yes_id = static_cast<int>(g.nodes.size());
    g.nodes[node].split = best->split;
    g.nodes[node].yes = yes_id;
    g.nodes[node].no = yes_id + 1;
    PolicyNode child;
    child.parent = static_cast<int>(node);
    g.nodes.push_back(child);
    g.nodes.push_back(child);
    g.rows.push_back(std::move(best->yes));
    g.rows.push_back(std::move(best->no));
    g.q.push_back(std::move(best->q_yes));
    g.q.push_back(std::move(best->q_no));
    g.fallback = g.fallback || best->fallback;
  }

  const auto leaves = g.leaves();
  std::vector<double> w;
  std::vector<std::vector<double>> q;
  for (auto l : leaves) {
    w.push_back(static_cast<double>(g.rows[l].size()) / n);
    q.push_back(g.q[l]);
  }
  const auto assigned = objective(w, q);
  for (std::size_t i = 0; i < leaves.size(); ++i) g.nodes[leaves[i]].action = assigned->actions[i];
  tree.nodes = std::move(g.nodes);

  auto result = evaluate_policy(tree, table, meta);
  result.average_budget = average_budget;
  return result;
}

OptimizationResult evaluate_policy(const PolicyTree& tree, const DataTable& table, const DatasetMetadata& meta) {
  for (const auto& f : tree.features)
    if (!table.has_column(f)) throw Error(Errc::unknown_column, f);
  for (const auto& node : tree.nodes)
    if (node.split && !table.has_column(node.split->column)) throw Error(Errc::unknown_column, node.split->column);
  if (table.row_count() == 0) throw Error(Errc::empty_table, "no rows");

  const auto ctx = make_context(table, meta, tree.levels, tree.features);
  std::vector<std::vector<std::size_t>> rows(tree.nodes.size());
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    std::size_t node = 0;
    rows[0].push_back(r);
    while (!tree.is_leaf(node)) {
      const auto& split = *tree.nodes[node].split;
      node = static_cast<std::size_t>(split.test(table.column(split.column).cells[r]) ? tree.nodes[node].yes
                                                                                        : tree.nodes[node].no);
      rows[node].push_back(r);
    }
  }

  OptimizationResult result;
  result.tree = tree;
  std::vector<std::vector<double>> q(tree.nodes.size());
  // Children always follow their parent in node order.
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const int parent = tree.nodes[i].parent;
    q[i] = segment_q(ctx, rows[i], parent >= 0 ? &q[static_cast<std::size_t>(parent)] : nullptr,
                     result.used_fallback);
  }

  const double n = static_cast<double>(table.row_count());
  std::vector<double> share(tree.action_labels.size(), 0.0);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    result.tree.nodes[i].coverage = rows[i].size();
    if (!tree.is_leaf(i)) continue;
    const double w = static_cast<double>(rows[i].size()) / n;
    const auto a = tree.nodes[i].action;
    result.projected_kpi += w * q[i][a];
    result.budget_used += w * tree.action_costs[a];
    share[a] += w;
  }
  for (std::size_t a = 0; a < share.size(); ++a) result.action_distribution.emplace_back(tree.action_labels[a], share[a]);
  result.baseline_kpi = ctx.global_mean;
  return result;
}

namespace {

TreeNodeSpec render_node(const PolicyTree& tree, std::size_t i, const std::string& edge) {
  TreeNodeSpec spec;
  spec.edge = edge;
  const auto& node = tree.nodes[i];
  if (!node.split) {
    spec.label = tree.action_labels[node.action];
    spec.leaf_action = tree.action_labels[node.action];
    return spec;
  }
  spec.label = node.split->label();
  spec.children.push_back(render_node(tree, static_cast<std::size_t>(node.yes), "yes"));
  spec.children.push_back(render_node(tree, static_cast<std::size_t>(node.no), "no"));
  return spec;
}

json node_json(const PolicyTree& tree, std::size_t i) {
  const auto& node = tree.nodes[i];
  json j = {{"coverage", node.coverage}};
  if (!node.split) {
    j["action"] = tree.action_labels[node.action];
    return j;
  }
  j["column"] = node.split->column;
  if (node.split->kind == Predicate::Kind::threshold) j["threshold"] = node.split->threshold;
  else j["members"] = node.split->members;
  j["yes"] = node_json(tree, static_cast<std::size_t>(node.yes));
  j["no"] = node_json(tree, static_cast<std::size_t>(node.no));
  return j;
}

}  // namespace

ChartSpec render_tree(const PolicyTree& tree) {
  ChartSpec chart;
  chart.kind = ChartSpec::Kind::tree;
  chart.title = "Prescriptive policy tree";
  chart.tree = render_node(tree, 0, "");
  return chart;
}

ChartSpec distribution_chart(const OptimizationResult& result, const DatasetMetadata& meta) {
  ChartSpec chart;
  chart.kind = ChartSpec::Kind::bar;
  chart.title = "Prescribed action distribution";
  chart.x_label = meta.action_column;
  chart.y_label = "fraction of rows";
  Series s;
  s.label = "optimized";
  for (const auto& [label, frac] : result.action_distribution) {
    s.x.emplace_back(label);
    s.y.push_back(frac);
  }
  chart.series.push_back(std::move(s));
  return chart;
}

json to_json(const PolicyTree& tree) {
  return {{"num_rules", tree.num_rules()},
          {"features", tree.features},
          {"action_levels", tree.action_labels},
          {"action_costs", tree.action_costs},
          {"root", node_json(tree, 0)}};
}

json to_json(const OptimizationResult& result) {
  json dist = json::object();
  for (const auto& [label, frac] : result.action_distribution) dist[label] = frac;
  return {{"tree", to_json(result.tree)},
          {"projected_kpi", result.projected_kpi},
          {"baseline_kpi", result.baseline_kpi},
          {"budget_used", result.budget_used},
          {"average_budget", result.average_budget},
          {"action_distribution", dist},
          {"used_fallback", result.used_fallback}};
}

}  // namespace prescribe
