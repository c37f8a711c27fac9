#include "joinrl/dp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace joinrl {

namespace {

using Mask = std::uint32_t;

/// Per-query costing context with subset-keyed cardinality memoization.
/// Relation indices follow the query's sorted relation list, so index order
/// is lexicographic order.
class QueryContext {
 public:
  QueryContext(const JoinQuery& query, const CardinalityProvider& provider,
               const Catalog& catalog, const CostParams& params)
      : query_(query), provider_(provider), catalog_(catalog), params_(params) {
    params_.validate();
    k_ = query.relations.size();
    card_.assign(Mask{1} << k_, std::numeric_limits<double>::quiet_NaN());
    for (const auto& p : query_.predicates) {
      PredInfo info;
      info.a = rel_index(p.left.table);
      info.b = rel_index(p.right.table);
      const ColumnStats* ca = catalog.table(p.left.table).find_column(p.left.column);
      const ColumnStats* cb = catalog.table(p.right.table).find_column(p.right.column);
      info.a_indexed = ca && ca->indexed;
      info.b_indexed = cb && cb->indexed;
      preds_.push_back(info);
    }
  }

  std::size_t relation_count() const { return k_; }
  const std::string& relation(std::size_t i) const { return query_.relations[i]; }
  const JoinQuery& query() const { return query_; }
  const CostParams& params() const { return params_; }

  double cardinality(Mask mask) {
    double& slot = card_[mask];
    if (!std::isnan(slot)) return slot;
    std::vector<std::string> rels;
    for (std::size_t i = 0; i < k_; ++i) {
      if (mask & (Mask{1} << i)) rels.push_back(query_.relations[i]);
    }
    const auto preds = query_.applicable_predicates(rels);
    slot = estimate_cardinality(rels, preds, provider_, catalog_);
    return slot;
  }

  double leaf_cost(std::size_t i) { return params_.tau * cardinality(Mask{1} << i); }

  bool connected(Mask mask, std::size_t r) const {
    for (const auto& p : preds_) {
      if ((p.a == r && (mask & bit(p.b))) || (p.b == r && (mask & bit(p.a)))) return true;
    }
    return false;
  }

  /// True if some relation outside `mask` connects to it by a predicate.
  bool has_connected_extension(Mask mask) const {
    for (std::size_t r = 0; r < k_; ++r) {
      if (mask & bit(r)) continue;
      if (connected(mask, r)) return true;
    }
    return false;
  }

  /// Index join of left subtree `mask` with leaf r: needs a predicate from
  /// the subtree to an indexed column on r.
  bool index_join_legal(Mask mask, std::size_t r) const {
    for (const auto& p : preds_) {
      if (p.a == r && (mask & bit(p.b)) && p.a_indexed) return true;
      if (p.b == r && (mask & bit(p.a)) && p.b_indexed) return true;
    }
    return false;
  }

  /// Cheapest algorithm for extending a subtree (mask `rest`, cost
  /// `rest_cost`) with leaf r. Ties keep the hash join.
  std::pair<JoinAlgo, double> extend_cost(Mask rest, double rest_cost, std::size_t r) {
    const Mask full = rest | bit(r);
    const double out_card = cardinality(full);
    const double hj = out_card + rest_cost + leaf_cost(r);
    if (index_join_legal(rest, r)) {
      const double rest_card = cardinality(rest);
      const double ij =
          rest_card == 0.0
              ? rest_cost
              : rest_cost + params_.lambda * rest_card * std::max(out_card / rest_card, 1.0);
      if (ij < hj) return {JoinAlgo::IndexNestedLoop, ij};
    }
    return {JoinAlgo::HashJoin, hj};
  }

  static Mask bit(std::size_t i) { return Mask{1} << i; }

 private:
  std::size_t rel_index(const std::string& table) const {
    const auto it = std::find(query_.relations.begin(), query_.relations.end(), table);
    return static_cast<std::size_t>(it - query_.relations.begin());
  }

  struct PredInfo {
    std::size_t a = 0, b = 0;
    bool a_indexed = false, b_indexed = false;
  };

  const JoinQuery& query_;
  const CardinalityProvider& provider_;
  const Catalog& catalog_;
  CostParams params_;
  std::size_t k_ = 0;
  std::vector<PredInfo> preds_;
  std::vector<double> card_;
};

}  // namespace

DpResult dp_left_deep(const JoinQuery& query, const CardinalityProvider& provider,
                      const Catalog& catalog, const CostParams& params, bool allow_cross,
                      std::size_t relation_limit) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t k = query.relations.size();
  if (k < 2) throw config_error("dp_left_deep: query needs at least 2 relations");
  if (k > relation_limit || k > 20) {
    throw config_error("dp_left_deep: " + std::to_string(k) + " relations exceeds the limit of " +
                       std::to_string(std::min<std::size_t>(relation_limit, 20)));
  }
  QueryContext ctx(query, provider, catalog, params);

  struct Entry {
    double cost = std::numeric_limits<double>::infinity();
    std::size_t last = 0;  // relation appended to reach this subset
    JoinAlgo algo = JoinAlgo::HashJoin;
    bool reachable = false;
  };
  std::vector<Entry> table(Mask{1} << k);
  for (std::size_t i = 0; i < k; ++i) {
    auto& e = table[QueryContext::bit(i)];
    e.cost = ctx.leaf_cost(i);
    e.reachable = true;
  }

  std::uint64_t expanded = 0;
  const Mask full = (Mask{1} << k) - 1;
  for (Mask mask = 1; mask <= full; ++mask) {
    if (std::popcount(mask) < 2) continue;
    Entry& entry = table[mask];
    for (std::size_t r = 0; r < k; ++r) {
      if (!(mask & QueryContext::bit(r))) continue;
      const Mask rest = mask ^ QueryContext::bit(r);
      const Entry& sub = table[rest];
      if (!sub.reachable) continue;
      const bool legal =
          allow_cross || ctx.connected(rest, r) || !ctx.has_connected_extension(rest);
      if (!legal) continue;
      ++expanded;
      const auto [algo, total] = ctx.extend_cost(rest, sub.cost, r);
      if (total < entry.cost) {
        entry.cost = total;
        entry.last = r;
        entry.algo = algo;
        entry.reachable = true;
      }
    }
  }

  const Entry& best = table[full];
  if (!best.reachable) throw runtime_error("dp_left_deep: no plan found");

  // Rebuild the chosen chain from the memo.
  std::vector<std::pair<std::size_t, JoinAlgo>> chain;
  Mask mask = full;
  while (std::popcount(mask) > 1) {
    const Entry& e = table[mask];
    chain.emplace_back(e.last, e.algo);
    mask ^= QueryContext::bit(e.last);
  }
  std::size_t first = std::countr_zero(mask);
  PlanPtr plan = make_leaf(query.relations[first]);
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    plan = make_join(std::move(plan), make_leaf(query.relations[it->first]), it->second);
  }

  DpResult result;
  result.plan = std::move(plan);
  result.cost = best.cost;
  result.expanded_states = expanded;
  result.elapsed = std::chrono::steady_clock::now() - start;
  return result;
}

DpResult exhaustive_left_deep(const JoinQuery& query, const CardinalityProvider& provider,
                              const Catalog& catalog, const CostParams& params,
                              bool allow_cross) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t k = query.relations.size();
  if (k < 2) throw config_error("exhaustive_left_deep: query needs at least 2 relations");
  if (k > 8) {
    throw config_error("exhaustive_left_deep: " + std::to_string(k) +
                       " relations exceeds the factorial guard of 8");
  }
  QueryContext ctx(query, provider, catalog, params);

  std::vector<std::size_t> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = i;

  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_perm;
  std::vector<JoinAlgo> best_algos;
  std::uint64_t evaluated = 0;

  do {
    Mask mask = QueryContext::bit(perm[0]);
    double running = ctx.leaf_cost(perm[0]);
    std::vector<JoinAlgo> algos;
    bool legal = true;
    for (std::size_t i = 1; i < k; ++i) {
      const std::size_t r = perm[i];
      if (!allow_cross && !ctx.connected(mask, r) && ctx.has_connected_extension(mask)) {
        legal = false;
        break;
      }
      const auto [algo, total] = ctx.extend_cost(mask, running, r);
      algos.push_back(algo);
      running = total;
      mask |= QueryContext::bit(r);
    }
    if (!legal) continue;
    ++evaluated;
    if (running < best_cost) {
      best_cost = running;
      best_perm = perm;
      best_algos = algos;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  if (best_perm.empty()) throw runtime_error("exhaustive_left_deep: no legal permutation");

  PlanPtr plan = make_leaf(query.relations[best_perm[0]]);
  for (std::size_t i = 1; i < k; ++i) {
    plan = make_join(std::move(plan), make_leaf(query.relations[best_perm[i]]),
                     best_algos[i - 1]);
  }

  DpResult result;
  result.plan = std::move(plan);
  result.cost = best_cost;
  result.expanded_states = evaluated;
  result.elapsed = std::chrono::steady_clock::now() - start;
  return result;
}

namespace {

/// Unlabeled binary tree shape; leaves filled left-to-right from a
/// permutation during evaluation. Subtrees are shared across shapes.
struct Shape {
  std::shared_ptr<const Shape> left, right;
  bool is_leaf() const { return !left; }
};
using ShapePtr = std::shared_ptr<const Shape>;

std::vector<ShapePtr> build_shapes(std::size_t leaves) {
  if (leaves == 1) return {std::make_shared<Shape>()};
  std::vector<ShapePtr> out;
  for (std::size_t l = 1; l < leaves; ++l) {
    for (const auto& ls : build_shapes(l)) {
      for (const auto& rs : build_shapes(leaves - l)) {
        auto n = std::make_shared<Shape>();
        n->left = ls;
        n->right = rs;
        out.push_back(std::move(n));
      }
    }
  }
  return out;
}

struct EvalResult {
  Mask mask = 0;
  double cost = 0.0;
};

/// Costs one labeled tree; `next` walks the permutation left to right.
EvalResult eval_shape(const Shape& shape, const std::vector<std::size_t>& perm,
                      std::size_t& next, QueryContext& ctx,
                      std::vector<JoinAlgo>* algos) {
  if (shape.is_leaf()) {
    const std::size_t r = perm[next++];
    return {QueryContext::bit(r), ctx.leaf_cost(r)};
  }
  const EvalResult l = eval_shape(*shape.left, perm, next, ctx, algos);
  const EvalResult r = eval_shape(*shape.right, perm, next, ctx, algos);
  const Mask mask = l.mask | r.mask;
  const double out_card = ctx.cardinality(mask);
  const double hj = out_card + l.cost + r.cost;
  JoinAlgo algo = JoinAlgo::HashJoin;
  double best = hj;
  if (shape.right->is_leaf()) {
    const std::size_t leaf = std::countr_zero(r.mask);
    if (ctx.index_join_legal(l.mask, leaf)) {
      const double l_card = ctx.cardinality(l.mask);
      const double ij = l_card == 0.0
                            ? l.cost
                            : l.cost + ctx.params().lambda * l_card *
                                           std::max(out_card / l_card, 1.0);
      if (ij < hj) {
        algo = JoinAlgo::IndexNestedLoop;
        best = ij;
      }
    }
  }
  if (algos) algos->push_back(algo);
  return {mask, best};
}

PlanPtr rebuild_shape(const Shape& shape, const std::vector<std::size_t>& perm,
                      std::size_t& next, const std::vector<JoinAlgo>& algos,
                      std::size_t& algo_next, const JoinQuery& query) {
  if (shape.is_leaf()) {
    return make_leaf(query.relations[perm[next++]]);
  }
  PlanPtr l = rebuild_shape(*shape.left, perm, next, algos, algo_next, query);
  PlanPtr r = rebuild_shape(*shape.right, perm, next, algos, algo_next, query);
  return make_join(std::move(l), std::move(r), algos[algo_next++]);
}

}  // namespace

DpResult exhaustive_bushy(const JoinQuery& query, const CardinalityProvider& provider,
                          const Catalog& catalog, const CostParams& params) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t k = query.relations.size();
  if (k < 2) throw config_error("exhaustive_bushy: query needs at least 2 relations");
  if (k > 7) {
    throw config_error("exhaustive_bushy: " + std::to_string(k) +
                       " relations exceeds the guard of 7");
  }
  QueryContext ctx(query, provider, catalog, params);

  const std::vector<ShapePtr> shapes = build_shapes(k);

  std::vector<std::size_t> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = i;

  double best_cost = std::numeric_limits<double>::infinity();
  const Shape* best_shape = nullptr;
  std::vector<std::size_t> best_perm;
  std::uint64_t evaluated = 0;

  for (const auto& shape : shapes) {
    std::vector<std::size_t> p = perm;
    do {
      std::size_t next = 0;
      const EvalResult res = eval_shape(*shape, p, next, ctx, nullptr);
      ++evaluated;
      if (res.cost < best_cost) {
        best_cost = res.cost;
        best_shape = shape.get();
        best_perm = p;
      }
    } while (std::next_permutation(p.begin(), p.end()));
  }

  // Re-derive the per-join algorithm choices of the winning tree.
  std::vector<JoinAlgo> algos;
  std::size_t next = 0;
  eval_shape(*best_shape, best_perm, next, ctx, &algos);
  next = 0;
  std::size_t algo_next = 0;
  PlanPtr plan = rebuild_shape(*best_shape, best_perm, next, algos, algo_next, query);

  DpResult result;
  result.plan = std::move(plan);
  result.cost = best_cost;
  result.expanded_states = evaluated;
  result.elapsed = std::chrono::steady_clock::now() - start;
  return result;
}

std::uint64_t count_tree_shapes(std::uint64_t j) {
  if (j < 1) throw config_error("count_tree_shapes: j must be >= 1");
  if (j > 30) throw config_error("count_tree_shapes: j > 30 overflows 64-bit counts");
  unsigned __int128 c = 1;  // Catalan number C_0
  for (std::uint64_t n = 0; n < j; ++n) {
    c = c * 2 * (2 * n + 1) / (n + 2);
  }
  return static_cast<std::uint64_t>(c);
}

}  // namespace joinrl
