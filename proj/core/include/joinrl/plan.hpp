#pragma once

#include <memory>
#include <string>
#include <vector>

#include "joinrl/catalog.hpp"
#include "joinrl/workload.hpp"

namespace joinrl {

enum class JoinAlgo { HashJoin, IndexNestedLoop };

inline const char* algo_tag(JoinAlgo a) {
  return a == JoinAlgo::HashJoin ? "hj" : "ij";
}

/// Binary join tree. A node is a leaf (base table) or a join of two
/// subtrees with an algorithm tag. Each base table appears exactly once.
/// Trees are immutable and share subtrees freely.
struct PlanNode;
using PlanPtr = std::shared_ptr<const PlanNode>;

struct PlanNode {
  std::string table;  // leaf only
  JoinAlgo algo = JoinAlgo::HashJoin;
  PlanPtr left;
  PlanPtr right;

  bool is_leaf() const { return !left; }
};

PlanPtr make_leaf(std::string table);
PlanPtr make_join(PlanPtr left, PlanPtr right, JoinAlgo algo);

/// Base tables of the subtree, sorted ascending.
std::vector<std::string> plan_relations(const PlanNode& plan);
std::size_t plan_leaf_count(const PlanNode& plan);
/// True if every right child is a leaf.
bool is_left_deep(const PlanNode& plan);

/// Canonical parenthesized text, e.g. "((P hj OI) ij O)".
std::string plan_to_text(const PlanNode& plan);
/// Inverse of plan_to_text. Checks table existence and uniqueness and that
/// ij nodes have leaf right children.
PlanPtr text_to_plan(std::string_view text, const Catalog& catalog);

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

/// Constants of the main-memory cost model and the reward mapping.
struct CostParams {
  double tau = 0.2;           // table scan discount, <= 1
  double lambda = 2.0;        // index lookup factor, >= 1
  double upper_bound = 1e13;  // cost at which the reward saturates, > 0
  double min_reward = -10.0;  // reward floor, < 0

  void validate() const;
};

/// Cardinality of the sub-query a plan computes: its relation set plus every
/// query predicate applicable within it. Depends only on the relation set,
/// never on tree shape.
double cardinality_of_plan(const PlanNode& plan, const JoinQuery& query,
                           const CardinalityProvider& provider, const Catalog& catalog);

/// Recursive plan cost:
///   leaf R                ->  tau * |R|
///   hash join             ->  |Q| + C(left) + C(right)
///   index nested loop     ->  C(left) + lambda * |left| * max(|Q| / |left|, 1)
/// The index case requires a leaf right child with an indexed join column
/// under an applicable predicate; |left| = 0 drops the lookup term.
double cost(const PlanNode& plan, const JoinQuery& query, const CardinalityProvider& provider,
            const Catalog& catalog, const CostParams& params);

/// Cheapest legal algorithm for joining two subtrees; ties go to HashJoin.
std::pair<JoinAlgo, double> best_algorithm_cost(const PlanPtr& left, const PlanPtr& right,
                                                const JoinQuery& query,
                                                const CardinalityProvider& provider,
                                                const Catalog& catalog,
                                                const CostParams& params);

/// True if an index-nested-loop join of `left` with leaf `right` is legal:
/// some applicable predicate reaches an indexed column of the right table.
bool index_join_legal(const PlanNode& left, const PlanNode& right, const JoinQuery& query,
                      const Catalog& catalog);

/// Maps a cost to [min_reward, 0]:  min_reward * sqrt(c / upper_bound),
/// saturating at min_reward for costs beyond the bound.
double reward_from_cost(double c, const CostParams& params);

}  // namespace joinrl
