#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "joinrl/env.hpp"
#include "joinrl/nn.hpp"
#include "joinrl/replay.hpp"

namespace joinrl {

enum class AgentKind { DQN, DDQN, PPO };
const char* agent_kind_name(AgentKind kind);
AgentKind agent_kind_from_name(std::string_view name);

enum class DqnVariant { Vanilla, DoublePER };

struct DqnConfig {
  std::uint64_t total_steps = 200000;
  std::uint64_t learning_start = 20000;
  std::uint64_t target_update = 10000;
  std::size_t n_step = 2;
  std::vector<std::size_t> hidden = {256, 256};
  double gamma = 1.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  /// Fraction of total_steps over which epsilon decays linearly.
  double epsilon_decay_fraction = 0.5;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 20000;
  std::size_t update_every = 4;
  double learning_rate = 1e-4;
  double per_alpha = 0.6;
  double per_beta_start = 0.4;
  std::uint64_t metrics_interval = 1000;
  /// Accepts learning_start >= total_steps (a run that never updates).
  /// Exists so published-but-inconsistent presets stay loadable.
  bool allow_no_learning = false;

  void validate() const;
  std::string digest_text(DqnVariant variant) const;
};

struct PpoConfig {
  std::uint64_t total_steps = 200000;
  double clip_epsilon = 0.3;
  std::vector<std::size_t> hidden = {256, 256};
  double gamma = 1.0;
  double gae_lambda = 0.95;
  std::size_t epochs = 4;
  std::size_t minibatch_size = 128;
  std::size_t horizon = 1024;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 1e-4;
  bool normalize_advantages = true;
  std::uint64_t metrics_interval = 1024;

  void validate() const;
  std::string digest_text() const;
};

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct AgentPreset {
  std::string name;
  AgentKind kind;
  std::optional<DqnConfig> dqn;
  std::optional<PpoConfig> ppo;
  DqnVariant variant = DqnVariant::Vanilla;
};

const std::vector<AgentPreset>& agent_presets();
const AgentPreset& agent_preset(std::string_view name);

// ---------------------------------------------------------------------------
// Temporal-difference targets and n-step folding
// ---------------------------------------------------------------------------

struct NStepSegmentStep {
  double reward = 0.0;
  bool done = false;
};

struct NStepReturn {
  double reward = 0.0;           // sum of gamma^i * r_i over the window
  std::size_t steps = 0;         // window length m = min(n, steps to terminal)
  bool terminal = false;         // no bootstrap when set
  double effective_discount = 1.0;  // gamma^m
};

NStepReturn n_step_return(std::span<const NStepSegmentStep> segment, std::size_t n,
                          double gamma);

/// r + gamma^steps * max over valid next actions of targetQ(S'), or r alone
/// on terminal transitions.
double dqn_target(const Transition& t, const Mlp& online, const Mlp& target, double gamma);

/// Decoupled target: the online net picks the action, the target net scores
/// it. Identical nets make this equal to dqn_target.
double ddqn_target(const Transition& t, const Mlp& online, const Mlp& target, double gamma);

// ---------------------------------------------------------------------------
// PPO losses
// ---------------------------------------------------------------------------

/// min(ratio * advantage, clip(ratio, 1-eps, 1+eps) * advantage).
double ppo_clip_objective(double ratio, double advantage, double epsilon);

struct PpoSample {
  const std::vector<double>* observation = nullptr;
  const ActionMask* mask = nullptr;
  std::size_t action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double return_ = 0.0;
};

struct PpoLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;

  double total(const PpoConfig& c) const {
    return policy_loss + c.value_coef * value_loss - c.entropy_coef * entropy;
  }
};

/// Evaluates the clipped-surrogate losses on a two-head net (action logits
/// plus trailing value output). When `grads` is given, also accumulates the
/// gradient of the combined loss. Throws on non-finite probability ratios.
PpoLosses ppo_losses(std::span<const PpoSample> batch, const Mlp& net, const PpoConfig& config,
                     std::vector<ParamBlock>* grads = nullptr);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Everything needed to spin up identical environments.
struct EnvFactory {
  const Catalog* catalog = nullptr;
  const CardinalityProvider* provider = nullptr;
  CostParams cost_params;
  EnvOptions options;

  JoinEnv make() const { return JoinEnv(*catalog, *provider, cost_params, options); }
};

struct Policy {
  AgentKind kind = AgentKind::DQN;
  Mlp net;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string catalog_digest;
  std::uint64_t training_steps = 0;
};

struct MetricsRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  double mean_episode_reward = 0.0;
  double exploration = 0.0;  // epsilon for DQN, policy entropy for PPO
};

struct TrainResult {
  Policy policy;
  std::vector<MetricsRow> metrics;
  std::uint64_t mask_violations = 0;  // stays zero; counted for auditing
};

TrainResult train_dqn(const EnvFactory& factory, std::span<const JoinQuery* const> train_set,
                      const DqnConfig& config, std::uint64_t seed, DqnVariant variant);

TrainResult train_ppo(const EnvFactory& factory, std::span<const JoinQuery* const> train_set,
                      const PpoConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct PlannedQuery {
  PlanPtr plan;
  double cost = 0.0;
  std::chrono::nanoseconds latency{0};
  std::size_t forward_passes = 0;
};

/// Greedy rollout: argmax over masked Q-values or policy logits. Exactly
/// k-1 network evaluations for a k-relation query.
PlannedQuery plan_query(const Policy& policy, const JoinQuery& query, JoinEnv& env);

struct EnsemblePlan {
  PlanPtr plan;
  double cost = 0.0;
  std::size_t policy_index = 0;
  std::chrono::nanoseconds latency{0};
};

/// Plans with every policy and keeps the cheapest plan; cost ties keep the
/// lowest policy index.
EnsemblePlan ensemble_plan(std::span<const Policy* const> policies, const JoinQuery& query,
                           JoinEnv& env);

// ---------------------------------------------------------------------------
// Policy files: "JRLP" magic, version, metadata, embedded weight blob.
// ---------------------------------------------------------------------------

void save_policy(const Policy& policy, const std::filesystem::path& path);
Policy load_policy(const std::filesystem::path& path);

void save_metrics(std::span<const MetricsRow> metrics,
                  std::span<const std::pair<std::string, std::string>> header,
                  const std::filesystem::path& path);

}  // namespace joinrl
