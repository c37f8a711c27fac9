#pragma once

#include <cstdint>
#include <vector>

#include "joinrl/nn.hpp"

namespace joinrl {

/// One (possibly n-step) experience. The reward field holds the discounted
/// accumulation over `steps` transitions; the environment pays out only at
/// the terminal step, so it is zero unless `done` is set.
struct Transition {
  std::vector<double> observation;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_observation;  // empty when done
  bool done = false;
  ActionMask next_mask;  // empty when done
  std::size_t steps = 1;  // n-step span actually accumulated
};

/// Priority exponent transform: (|td_error| + 1e-6)^alpha.
double priority_of(double td_error, double alpha);

struct SampledBatch {
  std::vector<const Transition*> transitions;
  std::vector<double> weights;  // importance weights, max-normalized
  std::vector<std::size_t> slots;
};

/// Ring buffer with optional proportional prioritized sampling backed by a
/// sum tree. Fresh insertions carry the maximum priority seen so far; in
/// uniform mode all priorities stay at 1.
class ReplayBuffer {
 public:
  struct Options {
    std::size_t capacity = 10000;
    bool prioritized = false;
    double alpha = 0.6;
    double beta_start = 0.4;
    double beta_end = 1.0;
    std::uint64_t beta_anneal_steps = 1;  // steps to reach beta_end
  };

  explicit ReplayBuffer(Options options);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return options_.capacity; }
  bool prioritized() const { return options_.prioritized; }

  /// Returns the slot the transition landed in.
  std::size_t insert(Transition t);

  /// Sampling frequencies are proportional to stored priorities; weights are
  /// (N * P_i)^-beta normalized by the batch maximum. Uniform mode yields
  /// unit weights.
  SampledBatch sample(std::size_t batch_size, Rng& rng) const;

  void set_priority(std::size_t slot, double priority);
  double priority(std::size_t slot) const;
  double max_priority() const { return max_priority_; }

  /// Linear annealing position for the importance exponent.
  void advance_beta(std::uint64_t step);
  double beta() const { return beta_; }

  const Transition& at(std::size_t slot) const { return storage_[slot]; }

 private:
  double tree_total() const { return tree_[1]; }
  void tree_update(std::size_t slot, double priority);
  std::size_t tree_find(double mass) const;

  Options options_;
  std::vector<Transition> storage_;
  std::vector<double> tree_;  // 1-based segment tree over leaves_ slots
  std::size_t leaves_ = 1;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  double max_priority_ = 1.0;
  double beta_ = 0.4;
};

}  // namespace joinrl
