#include "joinrl/plan.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace joinrl {

PlanPtr make_leaf(std::string table) {
  auto n = std::make_shared<PlanNode>();
  n->table = std::move(table);
  return n;
}

PlanPtr make_join(PlanPtr left, PlanPtr right, JoinAlgo algo) {
  if (!left || !right) throw runtime_error("make_join: null child");
  auto n = std::make_shared<PlanNode>();
  n->algo = algo;
  n->left = std::move(left);
  n->right = std::move(right);
  return n;
}

namespace {

void collect_relations(const PlanNode& p, std::vector<std::string>& out) {
  if (p.is_leaf()) {
    out.push_back(p.table);
    return;
  }
  collect_relations(*p.left, out);
  collect_relations(*p.right, out);
}

}  // namespace

std::vector<std::string> plan_relations(const PlanNode& plan) {
  std::vector<std::string> out;
  collect_relations(plan, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t plan_leaf_count(const PlanNode& plan) {
  if (plan.is_leaf()) return 1;
  return plan_leaf_count(*plan.left) + plan_leaf_count(*plan.right);
}

bool is_left_deep(const PlanNode& plan) {
  if (plan.is_leaf()) return true;
  return plan.right->is_leaf() && is_left_deep(*plan.left);
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

std::string plan_to_text(const PlanNode& plan) {
  if (plan.is_leaf()) return plan.table;
  return "(" + plan_to_text(*plan.left) + " " + algo_tag(plan.algo) + " " +
         plan_to_text(*plan.right) + ")";
}

namespace {

struct PlanParser {
  std::string_view text;
  std::size_t pos = 0;

  void skip_spaces() {
    while (pos < text.size() && text[pos] == ' ') ++pos;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw config_error("plan parse error at position " + std::to_string(pos) + ": " + msg);
  }

  std::string token() {
    skip_spaces();
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] != ' ' && text[pos] != '(' && text[pos] != ')') {
      ++pos;
    }
    if (pos == start) fail("expected a name");
    return std::string(text.substr(start, pos - start));
  }

  PlanPtr parse_node() {
    skip_spaces();
    if (pos >= text.size()) fail("unexpected end of input");
    if (text[pos] != '(') return make_leaf(token());
    ++pos;  // '('
    PlanPtr left = parse_node();
    const std::string tag = token();
    JoinAlgo algo;
    if (tag == "hj") algo = JoinAlgo::HashJoin;
    else if (tag == "ij") algo = JoinAlgo::IndexNestedLoop;
    else fail("unknown join tag '" + tag + "'");
    PlanPtr right = parse_node();
    skip_spaces();
    if (pos >= text.size() || text[pos] != ')') fail("expected ')'");
    ++pos;
    return make_join(std::move(left), std::move(right), algo);
  }
};

void check_plan_structure(const PlanNode& plan, const Catalog& catalog,
                          std::set<std::string>& seen) {
  if (plan.is_leaf()) {
    if (!catalog.has_table(plan.table)) {
      throw config_error("plan references unknown table '" + plan.table + "'");
    }
    if (!seen.insert(plan.table).second) {
      throw config_error("plan uses table '" + plan.table + "' more than once");
    }
    return;
  }
  if (plan.algo == JoinAlgo::IndexNestedLoop && !plan.right->is_leaf()) {
    throw config_error("index nested loop join requires a base relation on the right");
  }
  check_plan_structure(*plan.left, catalog, seen);
  check_plan_structure(*plan.right, catalog, seen);
}

}  // namespace

PlanPtr text_to_plan(std::string_view text, const Catalog& catalog) {
  PlanParser parser{text};
  PlanPtr plan = parser.parse_node();
  parser.skip_spaces();
  if (parser.pos != text.size()) parser.fail("trailing input");
  std::set<std::string> seen;
  check_plan_structure(*plan, catalog, seen);
  return plan;
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

void CostParams::validate() const {
  if (!(tau <= 1.0)) throw config_error("cost params: tau must be <= 1");
  if (!(lambda >= 1.0)) throw config_error("cost params: lambda must be >= 1");
  if (!(upper_bound > 0.0)) throw config_error("cost params: upper_bound must be > 0");
  if (!(min_reward < 0.0)) throw config_error("cost params: min_reward must be < 0");
}

double cardinality_of_plan(const PlanNode& plan, const JoinQuery& query,
                           const CardinalityProvider& provider, const Catalog& catalog) {
  const std::vector<std::string> rels = plan_relations(plan);
  const std::vector<JoinPredicate> preds = query.applicable_predicates(rels);
  return estimate_cardinality(rels, preds, provider, catalog);
}

bool index_join_legal(const PlanNode& left, const PlanNode& right, const JoinQuery& query,
                      const Catalog& catalog) {
  if (!right.is_leaf()) return false;
  const std::vector<std::string> left_rels = plan_relations(left);
  for (const auto& p : query.predicates) {
    const ColumnRef* on_right = nullptr;
    const ColumnRef* on_left = nullptr;
    if (p.left.table == right.table) {
      on_right = &p.left;
      on_left = &p.right;
    } else if (p.right.table == right.table) {
      on_right = &p.right;
      on_left = &p.left;
    } else {
      continue;
    }
    if (std::find(left_rels.begin(), left_rels.end(), on_left->table) == left_rels.end()) {
      continue;
    }
    const ColumnStats* col = catalog.table(right.table).find_column(on_right->column);
    if (col && col->indexed) return true;
  }
  return false;
}

double cost(const PlanNode& plan, const JoinQuery& query, const CardinalityProvider& provider,
            const Catalog& catalog, const CostParams& params) {
  params.validate();
  if (plan.is_leaf()) {
    return params.tau * cardinality_of_plan(plan, query, provider, catalog);
  }
  if (plan.algo == JoinAlgo::HashJoin) {
    const double out = cardinality_of_plan(plan, query, provider, catalog);
    return out + cost(*plan.left, query, provider, catalog, params) +
           cost(*plan.right, query, provider, catalog, params);
  }
  if (!index_join_legal(*plan.left, *plan.right, query, catalog)) {
    throw runtime_error("index nested loop join without an indexed join column on '" +
                        (plan.right->is_leaf() ? plan.right->table : std::string("<subtree>")) +
                        "'");
  }
  const double left_cost = cost(*plan.left, query, provider, catalog, params);
  const double left_card = cardinality_of_plan(*plan.left, query, provider, catalog);
  if (left_card == 0.0) return left_cost;  // empty outer side performs no lookups
  const double out_card = cardinality_of_plan(plan, query, provider, catalog);
  return left_cost + params.lambda * left_card * std::max(out_card / left_card, 1.0);
}

std::pair<JoinAlgo, double> best_algorithm_cost(const PlanPtr& left, const PlanPtr& right,
                                                const JoinQuery& query,
                                                const CardinalityProvider& provider,
                                                const Catalog& catalog,
                                                const CostParams& params) {
  const PlanPtr hj = make_join(left, right, JoinAlgo::HashJoin);
  const double hj_cost = cost(*hj, query, provider, catalog, params);
  if (index_join_legal(*left, *right, query, catalog)) {
    const PlanPtr ij = make_join(left, right, JoinAlgo::IndexNestedLoop);
    const double ij_cost = cost(*ij, query, provider, catalog, params);
    if (ij_cost < hj_cost) return {JoinAlgo::IndexNestedLoop, ij_cost};
  }
  return {JoinAlgo::HashJoin, hj_cost};
}

double reward_from_cost(double c, const CostParams& params) {
  params.validate();
  if (c < 0.0) throw runtime_error("reward_from_cost: negative cost");
  if (c > params.upper_bound) return params.min_reward;
  return params.min_reward * std::sqrt(c / params.upper_bound);
}

}  // namespace joinrl
