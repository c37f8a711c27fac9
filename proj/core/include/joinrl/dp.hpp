#pragma once

#include <chrono>
#include <cstdint>

#include "joinrl/plan.hpp"

namespace joinrl {

struct DpResult {
  PlanPtr plan;
  double cost = 0.0;
  std::uint64_t expanded_states = 0;
  std::chrono::nanoseconds elapsed{0};
};

/// System-R style bottom-up dynamic programming over left-deep trees.
/// Memoized on relation subsets; per-join algorithm chosen by cost; equal
/// costs keep the lexicographically smallest next relation. Cross products
/// are only taken when a prefix has no predicate-connected extension (or
/// always, with allow_cross).
DpResult dp_left_deep(const JoinQuery& query, const CardinalityProvider& provider,
                      const Catalog& catalog, const CostParams& params,
                      bool allow_cross = false, std::size_t relation_limit = 16);

/// Brute-force oracle: walks every leaf permutation as a left-deep tree
/// under the same cross-product rule as dp_left_deep. Guarded at 8 relations.
/// expanded_states counts fully evaluated permutations.
DpResult exhaustive_left_deep(const JoinQuery& query, const CardinalityProvider& provider,
                              const Catalog& catalog, const CostParams& params,
                              bool allow_cross = false);

/// Brute-force over the full plan space: every binary tree shape times every
/// leaf assignment, cross products included. Guarded at 7 relations.
/// expanded_states counts evaluated trees.
DpResult exhaustive_bushy(const JoinQuery& query, const CardinalityProvider& provider,
                          const Catalog& catalog, const CostParams& params);

/// Number of binary tree shapes for a query with j joins:
/// (2j)! / (j! * (j+1)!). Guarded against overflow beyond j = 30.
std::uint64_t count_tree_shapes(std::uint64_t j);

}  // namespace joinrl
