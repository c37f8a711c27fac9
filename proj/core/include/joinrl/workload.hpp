#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "joinrl/catalog.hpp"

namespace joinrl {

/// A multi-way equi-join query: k >= 2 relations plus predicates. Relations
/// are kept sorted ascending. The join graph must be connected unless the
/// query is flagged as containing cross products.
struct JoinQuery {
  std::string id;
  std::vector<std::string> relations;
  std::vector<JoinPredicate> predicates;
  bool cross_product = false;

  std::size_t relation_count() const { return relations.size(); }
  bool has_relation(std::string_view name) const;
  /// Predicates whose endpoints both lie inside `subset`.
  std::vector<JoinPredicate> applicable_predicates(std::span<const std::string> subset) const;
  /// True if some predicate connects a relation in `a` with one in `b`.
  bool connects(std::span<const std::string> a, std::span<const std::string> b) const;
};

/// Validates the JoinQuery invariants against a catalog. Throws config_error.
void validate_query(const JoinQuery& query, const Catalog& catalog);

struct Workload {
  std::string name;
  std::vector<JoinQuery> queries;
  /// Cost-model upper bound calibrated at generation time (90th percentile
  /// of random-plan costs); absent for hand-written workloads.
  std::optional<double> suggested_cost_upper_bound;

  std::size_t size() const { return queries.size(); }
  const JoinQuery& query(std::string_view id) const;
  bool has_query(std::string_view id) const;
};

Workload load_workload(const std::filesystem::path& path, const Catalog& catalog);
void save_workload(const Workload& workload, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

struct CatalogGenConfig {
  std::size_t tables = 10;
  std::size_t min_columns = 2;
  std::size_t max_columns = 4;
  std::uint64_t min_rows = 1000;
  std::uint64_t max_rows = 10'000'000;
  double indexed_probability = 0.5;
};

Catalog generate_synthetic_catalog(const CatalogGenConfig& config, std::uint64_t seed);

/// Joinable column pairs between tables. Always connected over the catalog.
struct SchemaGraph {
  std::vector<JoinPredicate> edges;  // one edge per unordered table pair

  std::vector<const JoinPredicate*> edges_of(std::string_view table) const;
};

SchemaGraph make_schema_graph(const Catalog& catalog, double extra_edge_probability,
                              std::uint64_t seed);

struct WorkloadGenConfig {
  std::size_t count = 60;
  std::size_t min_relations = 3;
  std::size_t max_relations = 8;
  /// Probability of keeping a non-tree induced schema edge as a predicate.
  double extra_predicate_probability = 0.5;
};

Workload generate_synthetic_workload(const Catalog& catalog, const SchemaGraph& graph,
                                     const WorkloadGenConfig& config, std::uint64_t seed);
/// Convenience overload deriving the schema graph from the same seed.
Workload generate_synthetic_workload(const Catalog& catalog, std::size_t count,
                                     std::size_t min_relations, std::size_t max_relations,
                                     std::uint64_t seed);

/// Every subset of 2+ relations of each query, keyed canonically, with the
/// estimated cardinality. Feeds Lookup-mode providers covering a workload.
/// Singleton subsets are included so leaf cardinalities resolve too.
std::unordered_map<std::string, double> enumerate_workload_cardinalities(
    const Workload& workload, const Catalog& catalog);

// ---------------------------------------------------------------------------
// Train/test splits
// ---------------------------------------------------------------------------

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct Split {
  std::vector<Fold> folds;
};

/// Exact partition: test sets are disjoint and cover the workload; sizes
/// differ by at most one. Train is the complement within each fold.
Split make_random_folds(const Workload& workload, std::size_t k, std::uint64_t seed);

/// Overlapping variant with a fixed per-fold test size. When k*test_size
/// exceeds the workload, the shuffled sequence wraps and the first
/// k*test_size - N queries appear in two test sets.
Split make_overlapping_folds(const Workload& workload, std::size_t k, std::size_t test_size,
                             std::uint64_t seed);

/// Partition whose training sides each cover every table and every predicate
/// id present in the workload. Queries that are the sole holder of a table
/// or predicate are pinned to all training sets and never tested. Test
/// assignment greedily maximizes the variety score (distinct relation counts
/// per test set), ties broken by query id.
Split make_curated_split(const Workload& workload, const Catalog& catalog, std::size_t k,
                         std::uint64_t seed);

void save_split(const Split& split, const std::filesystem::path& path);
Split load_split(const std::filesystem::path& path, const Workload& workload);

/// Tables / predicate ids not covered by a fold's training set; empty when
/// the curated-split constraints hold.
std::vector<std::string> audit_fold_coverage(const Workload& workload, const Fold& fold);

}  // namespace joinrl
