#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "joinrl/plan.hpp"

namespace joinrl {

/// Ordered table-pair actions over the catalog's n tables: size n*(n-1),
/// index(i, j) = i*(n-1) + (j if j < i else j-1).
struct ActionSpace {
  std::size_t n_tables = 0;

  std::size_t size() const { return n_tables * (n_tables - 1); }

  std::size_t encode(std::size_t i, std::size_t j) const {
    return i * (n_tables - 1) + (j < i ? j : j - 1);
  }

  std::pair<std::size_t, std::size_t> decode(std::size_t index) const {
    const std::size_t i = index / (n_tables - 1);
    const std::size_t r = index % (n_tables - 1);
    return {i, r < i ? r : r + 1};
  }
};

using ActionMask = std::vector<std::uint8_t>;  // 1 = valid

/// Binary featurization: the query vector (one slot per database column,
/// set for every column of every table in the query) followed by one row
/// per catalog table holding the column union of that row's sub-plan.
/// Flattened length is total_columns * (n_tables + 1) for every query.
struct Observation {
  std::size_t n_tables = 0;
  std::size_t total_columns = 0;
  std::vector<double> data;  // query vector first, then rows, row-major

  std::span<const double> query_vector() const {
    return {data.data(), total_columns};
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + total_columns * (r + 1), total_columns};
  }
  std::size_t flattened_size() const { return data.size(); }
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;  // nonzero only on the terminal step
  bool done = false;
  ActionMask mask;  // all-zero once done
};

struct EnvState {
  const JoinQuery* query = nullptr;
  std::vector<PlanPtr> row_plans;                   // one slot per catalog table
  std::vector<std::vector<std::string>> row_rels;   // relations per row, sorted
  std::size_t steps_taken = 0;
  std::size_t live_rows = 0;
};

struct EnvOptions {
  /// Mask out pairs with no connecting predicate (cross joins) unless no
  /// connected pair exists. With false, any two non-empty rows are joinable.
  bool require_connected = true;
};

/// The join-ordering decision process. One instance is single-threaded;
/// catalog and provider are shared read-only.
class JoinEnv {
 public:
  JoinEnv(const Catalog& catalog, const CardinalityProvider& provider, CostParams params,
          EnvOptions options = {});

  StepOutcome reset(const JoinQuery& query);
  /// Applies a mask-valid action: joins rows (i, j) with the cheaper legal
  /// algorithm, stores the result in row i and clears row j. Invalid actions
  /// throw and leave the state untouched.
  StepOutcome step(std::size_t action_index);

  ActionMask valid_action_mask() const;  // live states only
  bool done() const;
  PlanPtr final_plan() const;  // terminal states only
  double final_cost() const;   // terminal states only

  const ActionSpace& action_space() const { return space_; }
  std::size_t observation_size() const {
    return catalog_->total_column_count() * (catalog_->table_count() + 1);
  }
  const EnvState& state() const { return state_; }
  const Catalog& catalog() const { return *catalog_; }
  const CostParams& cost_params() const { return params_; }

 private:
  Observation make_observation() const;
  void ensure_live(const char* op) const;

  const Catalog* catalog_;
  const CardinalityProvider* provider_;
  CostParams params_;
  EnvOptions options_;
  ActionSpace space_;
  EnvState state_;
  std::vector<double> query_vector_;
  bool episode_active_ = false;
};

}  // namespace joinrl
