#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "joinrl/common.hpp"

namespace joinrl {

struct ColumnStats {
  std::string name;
  std::uint64_t distinct_count = 1;  // >= 1
  bool indexed = false;
};

struct TableStats {
  std::string name;
  std::uint64_t row_count = 0;
  std::vector<ColumnStats> columns;
  // Position of this table's first column in the flattened all-columns
  // vector. Assigned consecutively in declaration order by Catalog.
  std::size_t global_column_offset = 0;

  const ColumnStats* find_column(std::string_view column) const;
};

/// Immutable schema + statistics. Tables keep declaration order; column
/// offsets partition [0, total_column_count) without gaps.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<TableStats> tables);

  const std::vector<TableStats>& tables() const { return tables_; }
  std::size_t table_count() const { return tables_.size(); }
  std::size_t total_column_count() const { return total_columns_; }

  bool has_table(std::string_view name) const;
  const TableStats& table(std::string_view name) const;
  /// Index of the table in declaration order.
  std::size_t table_index(std::string_view name) const;
  const TableStats& table_at(std::size_t index) const { return tables_.at(index); }

  /// Canonical single-line serialization; basis of the digest.
  std::string canonical_text() const;
  std::string digest() const { return hex64(fnv1a(canonical_text())); }

 private:
  std::vector<TableStats> tables_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t total_columns_ = 0;
};

Catalog load_catalog(const std::filesystem::path& path);
void save_catalog(const Catalog& catalog, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Join predicates. Defined here because cardinality estimation consumes them;
// the workload module builds on the same type.
// ---------------------------------------------------------------------------

struct ColumnRef {
  std::string table;
  std::string column;

  std::string text() const { return table + "." + column; }
  friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};

struct JoinPredicate {
  ColumnRef left;
  ColumnRef right;  // left.table != right.table

  /// Stable identifier: endpoints in lexicographic order, no spaces.
  std::string id() const;
  /// True if both endpoints' tables are in `relations`.
  bool applies_to(std::span<const std::string> relations) const;
  friend bool operator==(const JoinPredicate&, const JoinPredicate&) = default;
};

JoinPredicate parse_predicate(std::string_view text);

/// Canonical key for a sub-query: sorted relation names + sorted predicate
/// ids, e.g. "A,B|A.x=B.y". Relations must arrive sorted ascending.
std::string subquery_key(std::span<const std::string> sorted_relations,
                         std::span<const JoinPredicate> predicates);

// ---------------------------------------------------------------------------
// Cardinality provider.
// ---------------------------------------------------------------------------

enum class CardinalityMode { Estimated, Lookup };

/// Source of |sub-query| values. Estimated mode applies independence and
/// uniformity: product of row counts times 1/max(ndv, ndv) per equi-join
/// predicate. Lookup mode serves injected values and treats a missing key
/// as a hard error.
class CardinalityProvider {
 public:
  CardinalityProvider() = default;
  static CardinalityProvider estimated() { return CardinalityProvider(); }
  static CardinalityProvider lookup(std::unordered_map<std::string, double> table);

  CardinalityMode mode() const { return mode_; }
  const std::unordered_map<std::string, double>& lookup_table() const { return lookup_; }

  double get(const std::string& key) const;  // Lookup mode only

 private:
  CardinalityMode mode_ = CardinalityMode::Estimated;
  std::unordered_map<std::string, double> lookup_;
};

CardinalityProvider load_lookup_provider(const std::filesystem::path& path);
void save_lookup_table(const std::unordered_map<std::string, double>& table,
                       const std::filesystem::path& path);

/// |relations ⋈ ... | under `provider`. Relations need not be sorted;
/// predicates must reference only the given relations.
double estimate_cardinality(std::span<const std::string> relations,
                            std::span<const JoinPredicate> predicates,
                            const CardinalityProvider& provider, const Catalog& catalog);

}  // namespace joinrl
