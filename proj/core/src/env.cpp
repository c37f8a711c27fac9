#include "joinrl/env.hpp"

#include <algorithm>

namespace joinrl {

JoinEnv::JoinEnv(const Catalog& catalog, const CardinalityProvider& provider, CostParams params,
                 EnvOptions options)
    : catalog_(&catalog), provider_(&provider), params_(params), options_(options) {
  params_.validate();
  if (catalog.table_count() < 2) throw config_error("environment needs at least 2 tables");
  space_.n_tables = catalog.table_count();
}

StepOutcome JoinEnv::reset(const JoinQuery& query) {
  if (query.relations.size() < 2) {
    throw config_error("query '" + query.id + "': needs at least 2 relations");
  }
  const std::size_t n = catalog_->table_count();
  state_ = EnvState{};
  state_.query = &query;
  state_.row_plans.assign(n, nullptr);
  state_.row_rels.assign(n, {});
  query_vector_.assign(catalog_->total_column_count(), 0.0);

  for (const auto& rel : query.relations) {
    const std::size_t row = catalog_->table_index(rel);  // throws on unknown table
    const TableStats& t = catalog_->table_at(row);
    state_.row_plans[row] = make_leaf(rel);
    state_.row_rels[row] = {rel};
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      query_vector_[t.global_column_offset + c] = 1.0;
    }
  }
  state_.live_rows = query.relations.size();
  episode_active_ = true;

  StepOutcome out;
  out.observation = make_observation();
  out.mask = valid_action_mask();
  return out;
}

void JoinEnv::ensure_live(const char* op) const {
  if (!episode_active_) throw runtime_error(std::string(op) + ": no active episode");
  if (done()) throw runtime_error(std::string(op) + ": episode is terminal");
}

bool JoinEnv::done() const {
  return episode_active_ && state_.live_rows == 1;
}

ActionMask JoinEnv::valid_action_mask() const {
  ensure_live("valid_action_mask");
  const std::size_t n = space_.n_tables;
  ActionMask mask(space_.size(), 0);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!state_.row_plans[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !state_.row_plans[j]) continue;
      if (options_.require_connected &&
          !state_.query->connects(state_.row_rels[i], state_.row_rels[j])) {
        continue;
      }
      mask[space_.encode(i, j)] = 1;
      any = true;
    }
  }
  if (!any) {
    // Disconnected remainder: allow the cross joins between components.
    for (std::size_t i = 0; i < n; ++i) {
      if (!state_.row_plans[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && state_.row_plans[j]) mask[space_.encode(i, j)] = 1;
      }
    }
  }
  return mask;
}

StepOutcome JoinEnv::step(std::size_t action_index) {
  ensure_live("step");
  if (action_index >= space_.size()) {
    throw runtime_error("step: action index " + std::to_string(action_index) +
                        " out of range");
  }
  const ActionMask mask = valid_action_mask();
  if (!mask[action_index]) {
    const auto [i, j] = space_.decode(action_index);
    throw runtime_error("step: invalid action (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");
  }
  const auto [i, j] = space_.decode(action_index);

  const auto [algo, join_cost] = best_algorithm_cost(
      state_.row_plans[i], state_.row_plans[j], *state_.query, *provider_, *catalog_, params_);
  (void)join_cost;
  state_.row_plans[i] = make_join(state_.row_plans[i], state_.row_plans[j], algo);
  std::vector<std::string> merged;
  std::merge(state_.row_rels[i].begin(), state_.row_rels[i].end(), state_.row_rels[j].begin(),
             state_.row_rels[j].end(), std::back_inserter(merged));
  state_.row_rels[i] = std::move(merged);
  state_.row_plans[j] = nullptr;
  state_.row_rels[j].clear();
  state_.live_rows -= 1;
  state_.steps_taken += 1;

  StepOutcome out;
  out.observation = make_observation();
  out.done = done();
  if (out.done) {
    out.reward = reward_from_cost(final_cost(), params_);
    out.mask.assign(space_.size(), 0);
  } else {
    out.mask = valid_action_mask();
  }
  return out;
}

PlanPtr JoinEnv::final_plan() const {
  if (!episode_active_ || !done()) throw runtime_error("final_plan: episode not terminal");
  for (const auto& p : state_.row_plans) {
    if (p) return p;
  }
  throw runtime_error("final_plan: no plan rows");
}

double JoinEnv::final_cost() const {
  return cost(*final_plan(), *state_.query, *provider_, *catalog_, params_);
}

Observation JoinEnv::make_observation() const {
  Observation obs;
  obs.n_tables = catalog_->table_count();
  obs.total_columns = catalog_->total_column_count();
  obs.data.assign(obs.total_columns * (obs.n_tables + 1), 0.0);
  std::copy(query_vector_.begin(), query_vector_.end(), obs.data.begin());
  for (std::size_t r = 0; r < obs.n_tables; ++r) {
    double* row = obs.data.data() + obs.total_columns * (r + 1);
    for (const auto& rel : state_.row_rels[r]) {
      const TableStats& t = catalog_->table(rel);
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        row[t.global_column_offset + c] = 1.0;
      }
    }
  }
  return obs;
}

}  // namespace joinrl
