#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "joinrl/agents.hpp"

namespace joinrl {

void PpoConfig::validate() const {
  if (total_steps == 0) throw config_error("ppo config: total_steps must be > 0");
  if (!(clip_epsilon > 0.0)) throw config_error("ppo config: clip_epsilon must be > 0");
  if (gamma <= 0.0 || gamma > 1.0) throw config_error("ppo config: gamma must be in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) {
    throw config_error("ppo config: gae_lambda must be in [0, 1]");
  }
  if (epochs == 0) throw config_error("ppo config: epochs must be > 0");
  if (minibatch_size == 0) throw config_error("ppo config: minibatch_size must be > 0");
  if (horizon == 0) throw config_error("ppo config: horizon must be > 0");
  if (hidden.empty()) throw config_error("ppo config: need at least one hidden layer");
}

std::string PpoConfig::digest_text() const {
  std::string s = "kind=ppo";
  s += ";total=" + std::to_string(total_steps);
  s += ";clip=" + fmt_double(clip_epsilon);
  s += ";hidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(hidden[i]);
  }
  s += ";gamma=" + fmt_double(gamma);
  s += ";gae=" + fmt_double(gae_lambda);
  s += ";epochs=" + std::to_string(epochs);
  s += ";minibatch=" + std::to_string(minibatch_size);
  s += ";horizon=" + std::to_string(horizon);
  s += ";vcoef=" + fmt_double(value_coef);
  s += ";ecoef=" + fmt_double(entropy_coef);
  s += ";lr=" + fmt_double(learning_rate);
  s += ";norm_adv=" + std::string(normalize_advantages ? "1" : "0");
  return s;
}

double ppo_clip_objective(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoLosses ppo_losses(std::span<const PpoSample> batch, const Mlp& net, const PpoConfig& config,
                     std::vector<ParamBlock>* grads) {
  if (batch.empty()) throw runtime_error("ppo_losses: empty batch");
  const std::size_t act_dim = net.output_size() - 1;
  PpoLosses losses;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  std::vector<double> output_grad(net.output_size(), 0.0);

  for (const PpoSample& s : batch) {
    const Mlp::Trace trace = net.forward_trace(*s.observation);
    const std::vector<double>& out = trace.output();
    const std::vector<double> probs =
        masked_softmax(std::span(out.data(), act_dim), *s.mask);
    const double p_action = probs[s.action];
    if (!(p_action > 0.0)) {
      throw runtime_error("ppo_losses: taken action has zero probability");
    }
    const double log_p = std::log(p_action);
    const double ratio = std::exp(log_p - s.old_log_prob);
    if (!std::isfinite(ratio)) {
      throw runtime_error("ppo_losses: non-finite probability ratio");
    }

    const double unclipped = ratio * s.advantage;
    const double clipped =
        std::clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * s.advantage;
    const double objective = std::min(unclipped, clipped);
    losses.policy_loss += -objective * inv_batch;

    const double value = out[act_dim];
    const double value_err = value - s.return_;
    losses.value_loss += value_err * value_err * inv_batch;

    double entropy = 0.0;
    for (std::size_t k = 0; k < act_dim; ++k) {
      if (probs[k] > 0.0) entropy -= probs[k] * std::log(probs[k]);
    }
    losses.entropy += entropy * inv_batch;

    if (grads) {
      std::fill(output_grad.begin(), output_grad.end(), 0.0);
      // Policy gradient flows through the unclipped branch only.
      if (unclipped <= clipped) {
        const double coeff = -ratio * s.advantage * inv_batch;
        for (std::size_t k = 0; k < act_dim; ++k) {
          if (!(*s.mask)[k]) continue;
          const double indicator = k == s.action ? 1.0 : 0.0;
          output_grad[k] += coeff * (indicator - probs[k]);
        }
      }
      // Entropy bonus: d(-c_e * H)/dz_k = c_e * p_k * (log p_k + H).
      if (config.entropy_coef != 0.0) {
        for (std::size_t k = 0; k < act_dim; ++k) {
          if (!(*s.mask)[k] || !(probs[k] > 0.0)) continue;
          output_grad[k] +=
              config.entropy_coef * probs[k] * (std::log(probs[k]) + entropy) * inv_batch;
        }
      }
      output_grad[act_dim] = config.value_coef * 2.0 * value_err * inv_batch;
      net.backward(trace, output_grad, grads);
    }
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

struct RolloutStep {
  std::vector<double> observation;
  ActionMask mask;
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_valid = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_valid = i;
    if (u < acc) return i;
  }
  if (last_valid == probs.size()) throw runtime_error("sample_categorical: no valid entry");
  return last_valid;  // fp rounding at the tail
}

}  // namespace

TrainResult train_ppo(const EnvFactory& factory, std::span<const JoinQuery* const> train_set,
                      const PpoConfig& config, std::uint64_t seed) {
  config.validate();
  if (train_set.empty()) throw config_error("train_ppo: empty training set");

  JoinEnv env = factory.make();
  const std::size_t obs_dim = env.observation_size();
  const std::size_t act_dim = env.action_space().size();

  std::vector<std::size_t> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(act_dim + 1);  // policy logits plus a value head

  Mlp net(sizes, mix_seed(seed, 0x696e6974));
  Adam optimizer(net, config.learning_rate);
  Rng rng(mix_seed(seed, 0x747261696e));

  TrainResult result;
  std::deque<double> recent_rewards;

  auto pick_query = [&]() -> const JoinQuery& {
    return *train_set[rng.below(train_set.size())];
  };

  StepOutcome outcome = env.reset(pick_query());
  std::vector<double> cur_obs = std::move(outcome.observation.data);
  ActionMask cur_mask = std::move(outcome.mask);

  std::uint64_t steps_done = 0;
  std::uint64_t next_metrics = config.metrics_interval;

  while (steps_done < config.total_steps) {
    const std::size_t horizon = static_cast<std::size_t>(
        std::min<std::uint64_t>(config.horizon, config.total_steps - steps_done));
    std::vector<RolloutStep> rollout;
    rollout.reserve(horizon);

    for (std::size_t h = 0; h < horizon; ++h) {
      const std::vector<double> out = net.forward(cur_obs);
      const std::vector<double> probs =
          masked_softmax(std::span(out.data(), act_dim), cur_mask);
      const std::size_t action = sample_categorical(probs, rng);
      if (!cur_mask[action]) ++result.mask_violations;

      StepOutcome next = env.step(action);
      RolloutStep rs;
      rs.observation = std::move(cur_obs);
      rs.mask = std::move(cur_mask);
      rs.action = action;
      rs.log_prob = std::log(probs[action]);
      rs.value = out[act_dim];
      rs.reward = next.reward;
      rs.done = next.done;
      rollout.push_back(std::move(rs));
      ++steps_done;

      if (next.done) {
        recent_rewards.push_back(next.reward);
        if (recent_rewards.size() > 100) recent_rewards.pop_front();
        outcome = env.reset(pick_query());
        cur_obs = std::move(outcome.observation.data);
        cur_mask = std::move(outcome.mask);
      } else {
        cur_obs = std::move(next.observation.data);
        cur_mask = std::move(next.mask);
      }
    }

    // Generalized advantage estimation over the rollout.
    double bootstrap = 0.0;
    if (!rollout.back().done) bootstrap = net.forward(cur_obs)[act_dim];
    std::vector<double> advantages(rollout.size(), 0.0);
    std::vector<double> returns(rollout.size(), 0.0);
    double gae = 0.0;
    for (std::size_t t = rollout.size(); t-- > 0;) {
      const double next_value =
          rollout[t].done ? 0.0
                          : (t + 1 < rollout.size() ? rollout[t + 1].value : bootstrap);
      const double nonterminal = rollout[t].done ? 0.0 : 1.0;
      const double delta = rollout[t].reward + config.gamma * next_value - rollout[t].value;
      gae = delta + config.gamma * config.gae_lambda * nonterminal * gae;
      advantages[t] = gae;
      returns[t] = advantages[t] + rollout[t].value;
    }
    if (config.normalize_advantages && advantages.size() > 1) {
      const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) /
                          static_cast<double>(advantages.size());
      double var = 0.0;
      for (const double a : advantages) var += (a - mean) * (a - mean);
      const double stddev = std::sqrt(var / static_cast<double>(advantages.size()));
      for (auto& a : advantages) a = (a - mean) / (stddev + 1e-8);
    }

    std::vector<std::size_t> order(rollout.size());
    std::iota(order.begin(), order.end(), 0);
    PpoLosses last_losses;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t begin = 0; begin < order.size(); begin += config.minibatch_size) {
        const std::size_t end = std::min(order.size(), begin + config.minibatch_size);
        std::vector<PpoSample> samples;
        samples.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
          const RolloutStep& rs = rollout[order[i]];
          samples.push_back({&rs.observation, &rs.mask, rs.action, rs.log_prob,
                             advantages[order[i]], returns[order[i]]});
        }
        std::vector<ParamBlock> grads = net.zero_grads();
        last_losses = ppo_losses(samples, net, config, &grads);
        if (!std::isfinite(last_losses.total(config))) {
          throw runtime_error("train_ppo: non-finite loss at step " +
                              std::to_string(steps_done));
        }
        optimizer.step(net, grads);
      }
    }

    if (steps_done >= next_metrics || steps_done >= config.total_steps) {
      result.metrics.push_back({steps_done, last_losses.total(config),
                                recent_rewards.empty()
                                    ? 0.0
                                    : std::accumulate(recent_rewards.begin(),
                                                      recent_rewards.end(), 0.0) /
                                          static_cast<double>(recent_rewards.size()),
                                last_losses.entropy});
      while (next_metrics <= steps_done) next_metrics += config.metrics_interval;
    }
  }

  result.policy.kind = AgentKind::PPO;
  result.policy.net = std::move(net);
  result.policy.seed = seed;
  result.policy.config_digest = hex64(fnv1a(config.digest_text()));
  result.policy.catalog_digest = factory.catalog->digest();
  result.policy.training_steps = config.total_steps;
  return result;
}

}  // namespace joinrl
