#include "joinrl/workload.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace joinrl {

using nlohmann::json;

bool JoinQuery::has_relation(std::string_view name) const {
  return std::find(relations.begin(), relations.end(), name) != relations.end();
}

std::vector<JoinPredicate> JoinQuery::applicable_predicates(
    std::span<const std::string> subset) const {
  std::vector<JoinPredicate> out;
  for (const auto& p : predicates) {
    if (p.applies_to(subset)) out.push_back(p);
  }
  return out;
}

bool JoinQuery::connects(std::span<const std::string> a, std::span<const std::string> b) const {
  auto in = [](std::span<const std::string> set, const std::string& t) {
    return std::find(set.begin(), set.end(), t) != set.end();
  };
  for (const auto& p : predicates) {
    if ((in(a, p.left.table) && in(b, p.right.table)) ||
        (in(a, p.right.table) && in(b, p.left.table))) {
      return true;
    }
  }
  return false;
}

namespace {

bool join_graph_connected(const JoinQuery& q) {
  if (q.relations.empty()) return true;
  std::unordered_set<std::string> visited{q.relations.front()};
  std::deque<std::string> frontier{q.relations.front()};
  while (!frontier.empty()) {
    const std::string cur = frontier.front();
    frontier.pop_front();
    for (const auto& p : q.predicates) {
      std::string other;
      if (p.left.table == cur) other = p.right.table;
      else if (p.right.table == cur) other = p.left.table;
      else continue;
      if (visited.insert(other).second) frontier.push_back(other);
    }
  }
  return visited.size() == q.relations.size();
}

}  // namespace

void validate_query(const JoinQuery& query, const Catalog& catalog) {
  if (query.relations.size() < 2) {
    throw config_error("query '" + query.id + "': needs at least 2 relations");
  }
  std::set<std::string> uniq(query.relations.begin(), query.relations.end());
  if (uniq.size() != query.relations.size()) {
    throw config_error("query '" + query.id + "': duplicate relation");
  }
  for (const auto& r : query.relations) {
    if (!catalog.has_table(r)) {
      throw config_error("query '" + query.id + "': unknown table '" + r + "'");
    }
  }
  for (const auto& p : query.predicates) {
    for (const auto& ref : {p.left, p.right}) {
      if (!query.has_relation(ref.table)) {
        throw config_error("query '" + query.id + "': predicate '" + p.id() +
                           "' references table '" + ref.table + "' outside the relation list");
      }
      if (!catalog.table(ref.table).find_column(ref.column)) {
        throw config_error("query '" + query.id + "': unknown column '" + ref.text() + "'");
      }
    }
  }
  if (!query.cross_product && !join_graph_connected(query)) {
    throw config_error("query '" + query.id +
                       "': join graph is disconnected and cross_product is not set");
  }
}

const JoinQuery& Workload::query(std::string_view id) const {
  for (const auto& q : queries) {
    if (q.id == id) return q;
  }
  throw config_error("unknown query id '" + std::string(id) + "'");
}

bool Workload::has_query(std::string_view id) const {
  for (const auto& q : queries) {
    if (q.id == id) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

namespace {

json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw config_error(std::string(what) + ": cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw config_error(std::string(what) + ": parse error in '" + path.string() +
                       "': " + e.what());
  }
  return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

Workload load_workload(const std::filesystem::path& path, const Catalog& catalog) {
  const json j = read_json_file(path, "workload");
  if (!j.is_object() || !j.contains("queries") || !j["queries"].is_array()) {
    throw config_error("workload: expected top-level object with a 'queries' array");
  }
  Workload w;
  w.name = j.value("name", std::string("workload"));
  if (j.contains("cost_upper_bound")) {
    w.suggested_cost_upper_bound = j["cost_upper_bound"].get<double>();
  }
  std::set<std::string> ids;
  for (const auto& jq : j["queries"]) {
    JoinQuery q;
    try {
      q.id = jq.at("id").get<std::string>();
      q.relations = jq.at("relations").get<std::vector<std::string>>();
      q.cross_product = jq.value("cross_product", false);
      for (const auto& jp : jq.at("predicates")) {
        q.predicates.push_back(parse_predicate(jp.get<std::string>()));
      }
    } catch (const json::exception& e) {
      throw config_error(std::string("workload: bad query entry: ") + e.what());
    }
    std::sort(q.relations.begin(), q.relations.end());
    if (!ids.insert(q.id).second) {
      throw config_error("workload: duplicate query id '" + q.id + "'");
    }
    validate_query(q, catalog);
    w.queries.push_back(std::move(q));
  }
  return w;
}

void save_workload(const Workload& workload, const std::filesystem::path& path) {
  json j;
  j["name"] = workload.name;
  if (workload.suggested_cost_upper_bound) {
    j["cost_upper_bound"] = *workload.suggested_cost_upper_bound;
  }
  j["queries"] = json::array();
  for (const auto& q : workload.queries) {
    json jq;
    jq["id"] = q.id;
    jq["relations"] = q.relations;
    jq["predicates"] = json::array();
    for (const auto& p : q.predicates) {
      jq["predicates"].push_back(p.left.text() + " = " + p.right.text());
    }
    if (q.cross_product) jq["cross_product"] = true;
    j["queries"].push_back(std::move(jq));
  }
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

Catalog generate_synthetic_catalog(const CatalogGenConfig& config, std::uint64_t seed) {
  if (config.tables < 2) throw config_error("catalog generator: need at least 2 tables");
  if (config.min_columns < 1 || config.min_columns > config.max_columns) {
    throw config_error("catalog generator: invalid column range");
  }
  if (config.min_rows < 1 || config.min_rows > config.max_rows) {
    throw config_error("catalog generator: invalid row range");
  }
  Rng rng(mix_seed(seed, 0x6361));
  std::vector<TableStats> tables;
  for (std::size_t i = 0; i < config.tables; ++i) {
    TableStats t;
    t.name = "t" + std::to_string(i);
    const double log_rows =
        rng.uniform(std::log(static_cast<double>(config.min_rows)),
                    std::log(static_cast<double>(config.max_rows)));
    t.row_count = static_cast<std::uint64_t>(std::llround(std::exp(log_rows)));
    const std::size_t ncols =
        config.min_columns +
        rng.below(config.max_columns - config.min_columns + 1);
    for (std::size_t c = 0; c < ncols; ++c) {
      ColumnStats col;
      col.name = "c" + std::to_string(c);
      const double log_ndv =
          rng.uniform(std::log(10.0), std::log(std::max(10.0, static_cast<double>(t.row_count))));
      col.distinct_count = std::min<std::uint64_t>(
          t.row_count, std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(
                                                      std::exp(log_ndv)))));
      col.indexed = rng.bernoulli(config.indexed_probability);
      t.columns.push_back(std::move(col));
    }
    tables.push_back(std::move(t));
  }
  return Catalog(std::move(tables));
}

std::vector<const JoinPredicate*> SchemaGraph::edges_of(std::string_view table) const {
  std::vector<const JoinPredicate*> out;
  for (const auto& e : edges) {
    if (e.left.table == table || e.right.table == table) out.push_back(&e);
  }
  return out;
}

SchemaGraph make_schema_graph(const Catalog& catalog, double extra_edge_probability,
                              std::uint64_t seed) {
  const auto& tables = catalog.tables();
  if (tables.size() < 2) throw config_error("schema graph: need at least 2 tables");
  Rng rng(mix_seed(seed, 0x6772));

  auto pick_column = [&](const TableStats& t) {
    return t.columns[rng.below(t.columns.size())].name;
  };

  SchemaGraph graph;
  std::set<std::pair<std::size_t, std::size_t>> used;
  // Spanning tree over a shuffled table order keeps the graph connected.
  std::vector<std::size_t> order(tables.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 1; i < order.size(); ++i) {
    const std::size_t a = order[i];
    const std::size_t b = order[rng.below(i)];
    used.insert({std::min(a, b), std::max(a, b)});
    graph.edges.push_back(JoinPredicate{{tables[a].name, pick_column(tables[a])},
                                        {tables[b].name, pick_column(tables[b])}});
  }
  for (std::size_t a = 0; a < tables.size(); ++a) {
    for (std::size_t b = a + 1; b < tables.size(); ++b) {
      if (used.contains({a, b})) continue;
      if (!rng.bernoulli(extra_edge_probability)) continue;
      graph.edges.push_back(JoinPredicate{{tables[a].name, pick_column(tables[a])},
                                          {tables[b].name, pick_column(tables[b])}});
    }
  }
  return graph;
}

Workload generate_synthetic_workload(const Catalog& catalog, const SchemaGraph& graph,
                                     const WorkloadGenConfig& config, std::uint64_t seed) {
  if (config.min_relations < 2 || config.min_relations > config.max_relations ||
      config.max_relations > catalog.table_count()) {
    throw config_error("workload generator: relation range [" +
                       std::to_string(config.min_relations) + ", " +
                       std::to_string(config.max_relations) +
                       "] infeasible for a catalog with " +
                       std::to_string(catalog.table_count()) + " tables");
  }
  Rng rng(mix_seed(seed, 0x776b));
  Workload w;
  w.name = "synthetic-" + std::to_string(catalog.table_count()) + "t-" +
           std::to_string(config.count) + "q";

  int width = 1;
  for (std::size_t v = config.count; v >= 10; v /= 10) ++width;

  for (std::size_t qi = 0; qi < config.count; ++qi) {
    const std::size_t k =
        config.min_relations + rng.below(config.max_relations - config.min_relations + 1);
    std::vector<std::string> grown{catalog.table_at(rng.below(catalog.table_count())).name};
    std::vector<JoinPredicate> preds;
    while (grown.size() < k) {
      // Frontier edges: exactly one endpoint inside the grown set.
      std::vector<const JoinPredicate*> frontier;
      for (const auto& e : graph.edges) {
        const bool l = std::find(grown.begin(), grown.end(), e.left.table) != grown.end();
        const bool r = std::find(grown.begin(), grown.end(), e.right.table) != grown.end();
        if (l != r) frontier.push_back(&e);
      }
      if (frontier.empty()) {
        throw config_error("workload generator: schema graph disconnected");
      }
      const JoinPredicate* e = frontier[rng.below(frontier.size())];
      const bool l_in = std::find(grown.begin(), grown.end(), e->left.table) != grown.end();
      grown.push_back(l_in ? e->right.table : e->left.table);
      preds.push_back(*e);
    }
    // Remaining induced schema edges become extra predicates.
    for (const auto& e : graph.edges) {
      const bool l = std::find(grown.begin(), grown.end(), e.left.table) != grown.end();
      const bool r = std::find(grown.begin(), grown.end(), e.right.table) != grown.end();
      if (!l || !r) continue;
      const bool already = std::any_of(preds.begin(), preds.end(),
                                       [&](const JoinPredicate& p) { return p.id() == e.id(); });
      if (already) continue;
      if (rng.bernoulli(config.extra_predicate_probability)) preds.push_back(e);
    }

    JoinQuery q;
    std::string num = std::to_string(qi);
    q.id = "q" + std::string(width - static_cast<int>(num.size()), '0') + num;
    q.relations = std::move(grown);
    std::sort(q.relations.begin(), q.relations.end());
    q.predicates = std::move(preds);
    validate_query(q, catalog);
    w.queries.push_back(std::move(q));
  }
  return w;
}

Workload generate_synthetic_workload(const Catalog& catalog, std::size_t count,
                                     std::size_t min_relations, std::size_t max_relations,
                                     std::uint64_t seed) {
  const SchemaGraph graph = make_schema_graph(catalog, 0.2, seed);
  WorkloadGenConfig config;
  config.count = count;
  config.min_relations = min_relations;
  config.max_relations = max_relations;
  return generate_synthetic_workload(catalog, graph, config, seed);
}

std::unordered_map<std::string, double> enumerate_workload_cardinalities(
    const Workload& workload, const Catalog& catalog) {
  const CardinalityProvider est = CardinalityProvider::estimated();
  std::unordered_map<std::string, double> table;
  for (const auto& q : workload.queries) {
    const std::size_t k = q.relations.size();
    if (k > 20) {
      throw config_error("query '" + q.id + "': too many relations to enumerate subsets");
    }
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << k); ++mask) {
      std::vector<std::string> subset;
      for (std::size_t i = 0; i < k; ++i) {
        if (mask & (std::uint64_t{1} << i)) subset.push_back(q.relations[i]);
      }
      const auto preds = q.applicable_predicates(subset);
      const std::string key = subquery_key(subset, preds);
      if (!table.contains(key)) {
        table.emplace(key, estimate_cardinality(subset, preds, est, catalog));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> workload_ids(const Workload& w) {
  std::vector<std::string> ids;
  ids.reserve(w.size());
  for (const auto& q : w.queries) ids.push_back(q.id);
  return ids;
}

/// Restores workload declaration order on a set of ids.
std::vector<std::string> in_workload_order(const Workload& w,
                                           const std::set<std::string>& ids) {
  std::vector<std::string> out;
  for (const auto& q : w.queries) {
    if (ids.contains(q.id)) out.push_back(q.id);
  }
  return out;
}

}  // namespace

Split make_random_folds(const Workload& workload, std::size_t k, std::uint64_t seed) {
  const std::size_t n = workload.size();
  if (k < 2) throw config_error("folds: k must be >= 2");
  if (k > n) {
    throw config_error("folds: k=" + std::to_string(k) + " exceeds workload size " +
                       std::to_string(n));
  }
  std::vector<std::string> ids = workload_ids(workload);
  Rng rng(mix_seed(seed, 0x666f));
  rng.shuffle(ids);

  Split split;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    std::set<std::string> test(ids.begin() + pos, ids.begin() + pos + size);
    pos += size;
    Fold fold;
    fold.test = in_workload_order(workload, test);
    for (const auto& q : workload.queries) {
      if (!test.contains(q.id)) fold.train.push_back(q.id);
    }
    split.folds.push_back(std::move(fold));
  }
  return split;
}

Split make_overlapping_folds(const Workload& workload, std::size_t k, std::size_t test_size,
                             std::uint64_t seed) {
  const std::size_t n = workload.size();
  if (k < 2) throw config_error("folds: k must be >= 2");
  if (test_size == 0 || test_size > n) throw config_error("folds: invalid test size");
  if (k * test_size < n) {
    throw config_error("folds: k*test_size too small to cover every query");
  }
  std::vector<std::string> ids = workload_ids(workload);
  Rng rng(mix_seed(seed, 0x666f));
  rng.shuffle(ids);

  Split split;
  for (std::size_t f = 0; f < k; ++f) {
    std::set<std::string> test;
    for (std::size_t j = 0; j < test_size; ++j) {
      test.insert(ids[(f * test_size + j) % n]);
    }
    Fold fold;
    fold.test = in_workload_order(workload, test);
    for (const auto& q : workload.queries) {
      if (!test.contains(q.id)) fold.train.push_back(q.id);
    }
    split.folds.push_back(std::move(fold));
  }
  return split;
}

namespace {

struct CoverageItems {
  // item key -> holder query ids (workload order)
  std::map<std::string, std::vector<std::string>> holders;
};

CoverageItems collect_items(const Workload& w) {
  CoverageItems items;
  for (const auto& q : w.queries) {
    for (const auto& r : q.relations) items.holders["table " + r].push_back(q.id);
    for (const auto& p : q.predicates) items.holders["predicate " + p.id()].push_back(q.id);
  }
  return items;
}

std::size_t variety_score(const Workload& w, const std::vector<std::string>& test_ids) {
  std::set<std::size_t> sizes;
  for (const auto& id : test_ids) sizes.insert(w.query(id).relation_count());
  return sizes.size();
}

}  // namespace

Split make_curated_split(const Workload& workload, const Catalog& catalog, std::size_t k,
                         std::uint64_t seed) {
  (void)catalog;
  const std::size_t n = workload.size();
  if (k < 2) throw config_error("folds: k must be >= 2");
  if (k > n) throw config_error("folds: k exceeds workload size");

  const CoverageItems items = collect_items(workload);

  // Sole holders can never be tested: removing them from any training set
  // would uncover their item.
  std::set<std::string> pinned;
  for (const auto& [item, holders] : items.holders) {
    if (holders.size() == 1) pinned.insert(holders.front());
  }
  std::vector<std::string> free_ids;
  for (const auto& q : workload.queries) {
    if (!pinned.contains(q.id)) free_ids.push_back(q.id);
  }
  if (free_ids.size() < k) {
    throw config_error("curated split: only " + std::to_string(free_ids.size()) +
                       " non-pinned queries for k=" + std::to_string(k) + " folds");
  }

  std::vector<std::size_t> capacity(k);
  for (std::size_t f = 0; f < k; ++f) {
    capacity[f] = free_ids.size() / k + (f < free_ids.size() % k ? 1 : 0);
  }

  // Greedy variety assignment: each step places the query/fold pair with the
  // largest variety gain; ties fall back to query id, then fold index.
  std::vector<std::vector<std::string>> test_sets(k);
  std::set<std::string> unassigned(free_ids.begin(), free_ids.end());
  while (!unassigned.empty()) {
    int best_gain = -1;
    std::string best_query;
    std::size_t best_fold = 0;
    for (const auto& id : unassigned) {
      const std::size_t size = workload.query(id).relation_count();
      for (std::size_t f = 0; f < k; ++f) {
        if (test_sets[f].size() >= capacity[f]) continue;
        bool have = false;
        for (const auto& other : test_sets[f]) {
          if (workload.query(other).relation_count() == size) {
            have = true;
            break;
          }
        }
        const int gain = have ? 0 : 1;
        if (gain > best_gain) {
          best_gain = gain;
          best_query = id;
          best_fold = f;
        }
      }
    }
    test_sets[best_fold].push_back(best_query);
    unassigned.erase(best_query);
  }

  // Repair coverage: an item whose holders all sit in one test set leaves
  // that fold's training side uncovered. Swap holders out until clean.
  auto fold_violations = [&](const std::vector<std::string>& test) {
    std::set<std::string> test_set(test.begin(), test.end());
    std::vector<std::string> bad;
    for (const auto& [item, holders] : items.holders) {
      bool covered = false;
      for (const auto& h : holders) {
        if (!test_set.contains(h)) {
          covered = true;
          break;
        }
      }
      if (!covered) bad.push_back(item);
    }
    return bad;
  };

  Rng rng(mix_seed(seed, 0x6373));
  const std::size_t max_passes = 20 * k + 50;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    std::size_t total = 0;
    for (std::size_t f = 0; f < k; ++f) total += fold_violations(test_sets[f]).size();
    if (total == 0) break;

    bool improved = false;
    for (std::size_t f = 0; f < k && !improved; ++f) {
      const auto bad = fold_violations(test_sets[f]);
      if (bad.empty()) continue;
      // Try swapping each test query of f with one of another fold.
      std::vector<std::size_t> qorder(test_sets[f].size());
      for (std::size_t i = 0; i < qorder.size(); ++i) qorder[i] = i;
      rng.shuffle(qorder);
      for (const std::size_t qi : qorder) {
        for (std::size_t g = 0; g < k && !improved; ++g) {
          if (g == f) continue;
          for (std::size_t rj = 0; rj < test_sets[g].size(); ++rj) {
            std::swap(test_sets[f][qi], test_sets[g][rj]);
            std::size_t after = 0;
            for (std::size_t h = 0; h < k; ++h) after += fold_violations(test_sets[h]).size();
            if (after < total) {
              improved = true;
              break;
            }
            std::swap(test_sets[f][qi], test_sets[g][rj]);
          }
        }
        if (improved) break;
      }
    }
    if (!improved) break;
  }

  for (std::size_t f = 0; f < k; ++f) {
    const auto bad = fold_violations(test_sets[f]);
    if (!bad.empty()) {
      throw config_error("curated split: fold " + std::to_string(f) +
                         " cannot cover " + bad.front() + " in its training set");
    }
  }

  Split split;
  for (std::size_t f = 0; f < k; ++f) {
    std::set<std::string> test(test_sets[f].begin(), test_sets[f].end());
    Fold fold;
    fold.test = in_workload_order(workload, test);
    for (const auto& q : workload.queries) {
      if (!test.contains(q.id)) fold.train.push_back(q.id);
    }
    split.folds.push_back(std::move(fold));
  }
  return split;
}

void save_split(const Split& split, const std::filesystem::path& path) {
  json j;
  j["folds"] = json::array();
  for (const auto& f : split.folds) {
    j["folds"].push_back({{"train", f.train}, {"test", f.test}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

Split load_split(const std::filesystem::path& path, const Workload& workload) {
  const json j = read_json_file(path, "split");
  if (!j.is_object() || !j.contains("folds")) {
    throw config_error("split: expected top-level object with 'folds'");
  }
  Split split;
  for (const auto& jf : j["folds"]) {
    Fold f;
    f.train = jf.at("train").get<std::vector<std::string>>();
    f.test = jf.at("test").get<std::vector<std::string>>();
    std::set<std::string> train(f.train.begin(), f.train.end());
    for (const auto& id : f.test) {
      if (!workload.has_query(id)) throw config_error("split: unknown query id '" + id + "'");
      if (train.contains(id)) {
        throw config_error("split: query '" + id + "' appears in both train and test");
      }
    }
    for (const auto& id : f.train) {
      if (!workload.has_query(id)) throw config_error("split: unknown query id '" + id + "'");
    }
    split.folds.push_back(std::move(f));
  }
  return split;
}

std::vector<std::string> audit_fold_coverage(const Workload& workload, const Fold& fold) {
  const CoverageItems items = collect_items(workload);
  std::set<std::string> train(fold.train.begin(), fold.train.end());
  std::vector<std::string> uncovered;
  for (const auto& [item, holders] : items.holders) {
    bool covered = false;
    for (const auto& h : holders) {
      if (train.contains(h)) {
        covered = true;
        break;
      }
    }
    if (!covered) uncovered.push_back(item);
  }
  return uncovered;
}

}  // namespace joinrl
