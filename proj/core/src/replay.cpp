#include "joinrl/replay.hpp"

#include <algorithm>
#include <cmath>

namespace joinrl {

double priority_of(double td_error, double alpha) {
  if (alpha < 0.0) throw config_error("priority_of: alpha must be >= 0");
  return std::pow(std::abs(td_error) + 1e-6, alpha);
}

ReplayBuffer::ReplayBuffer(Options options) : options_(options), beta_(options.beta_start) {
  if (options_.capacity == 0) throw config_error("replay buffer: zero capacity");
  if (options_.alpha < 0.0) throw config_error("replay buffer: alpha must be >= 0");
  storage_.reserve(options_.capacity);
  // Round capacity up to a power of two for the segment tree leaves.
  std::size_t leaves = 1;
  while (leaves < options_.capacity) leaves *= 2;
  tree_.assign(2 * leaves, 0.0);
  leaves_ = leaves;
}

std::size_t ReplayBuffer::insert(Transition t) {
  const std::size_t slot = next_;
  if (storage_.size() < options_.capacity) {
    storage_.push_back(std::move(t));
  } else {
    storage_[slot] = std::move(t);
  }
  next_ = (next_ + 1) % options_.capacity;
  size_ = storage_.size();
  tree_update(slot, options_.prioritized ? max_priority_ : 1.0);
  return slot;
}

void ReplayBuffer::set_priority(std::size_t slot, double priority) {
  if (slot >= size_) throw runtime_error("replay buffer: slot out of range");
  if (!(priority > 0.0) || !std::isfinite(priority)) {
    throw runtime_error("replay buffer: priority must be positive and finite");
  }
  max_priority_ = std::max(max_priority_, priority);
  tree_update(slot, priority);
}

double ReplayBuffer::priority(std::size_t slot) const {
  if (slot >= size_) throw runtime_error("replay buffer: slot out of range");
  return tree_[leaves_ + slot];
}

void ReplayBuffer::advance_beta(std::uint64_t step) {
  const double frac =
      std::min(1.0, static_cast<double>(step) /
                        static_cast<double>(std::max<std::uint64_t>(1, options_.beta_anneal_steps)));
  beta_ = options_.beta_start + (options_.beta_end - options_.beta_start) * frac;
}

void ReplayBuffer::tree_update(std::size_t slot, double priority) {
  std::size_t node = leaves_ + slot;
  tree_[node] = priority;
  node /= 2;
  while (node >= 1) {
    tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
    node /= 2;
  }
}

std::size_t ReplayBuffer::tree_find(double mass) const {
  std::size_t node = 1;
  while (node < leaves_) {
    if (mass <= tree_[2 * node] || tree_[2 * node + 1] == 0.0) {
      node = 2 * node;
    } else {
      mass -= tree_[2 * node];
      node = 2 * node + 1;
    }
  }
  return node - leaves_;
}

SampledBatch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (size_ == 0) throw runtime_error("replay buffer: sampling from an empty buffer");
  if (batch_size == 0) throw runtime_error("replay buffer: zero batch size");

  SampledBatch batch;
  batch.transitions.reserve(batch_size);
  batch.weights.reserve(batch_size);
  batch.slots.reserve(batch_size);

  if (!options_.prioritized) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t slot = rng.below(size_);
      batch.slots.push_back(slot);
      batch.transitions.push_back(&storage_[slot]);
      batch.weights.push_back(1.0);
    }
    return batch;
  }

  const double total = tree_total();
  double max_weight = 0.0;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const double mass = rng.uniform() * total;
    std::size_t slot = tree_find(mass);
    if (slot >= size_) slot = size_ - 1;  // guards fp edge at the total
    batch.slots.push_back(slot);
    batch.transitions.push_back(&storage_[slot]);
    const double prob = tree_[leaves_ + slot] / total;
    const double w = std::pow(static_cast<double>(size_) * prob, -beta_);
    batch.weights.push_back(w);
    max_weight = std::max(max_weight, w);
  }
  for (auto& w : batch.weights) w /= max_weight;
  return batch;
}

}  // namespace joinrl
