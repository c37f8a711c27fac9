#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "joinrl/agents.hpp"

namespace joinrl {

using nlohmann::json;

PlannedQuery plan_query(const Policy& policy, const JoinQuery& query, JoinEnv& env) {
  const auto start = std::chrono::steady_clock::now();
  StepOutcome out = env.reset(query);
  PlannedQuery planned;
  const std::size_t act_dim = env.action_space().size();
  while (!out.done) {
    const std::vector<double> values = policy.net.forward(out.observation.data);
    ++planned.forward_passes;
    // PPO nets carry a trailing value head; selection uses the logits only.
    const std::size_t usable = policy.kind == AgentKind::PPO ? act_dim : values.size();
    const std::size_t action =
        masked_argmax(std::span(values.data(), usable), out.mask);
    out = env.step(action);
  }
  planned.plan = env.final_plan();
  planned.cost = env.final_cost();
  planned.latency = std::chrono::steady_clock::now() - start;
  return planned;
}

EnsemblePlan ensemble_plan(std::span<const Policy* const> policies, const JoinQuery& query,
                           JoinEnv& env) {
  if (policies.empty()) throw config_error("ensemble_plan: empty policy list");
  const auto start = std::chrono::steady_clock::now();
  EnsemblePlan best;
  bool have = false;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const PlannedQuery planned = plan_query(*policies[i], query, env);
    if (!have || planned.cost < best.cost) {
      best.plan = planned.plan;
      best.cost = planned.cost;
      best.policy_index = i;
      have = true;
    }
  }
  best.latency = std::chrono::steady_clock::now() - start;
  return best;
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

namespace {

constexpr char kPolicyMagic[4] = {'J', 'R', 'L', 'P'};
constexpr std::uint32_t kPolicyVersion = 1;

}  // namespace

void save_policy(const Policy& policy, const std::filesystem::path& path) {
  json meta;
  meta["kind"] = agent_kind_name(policy.kind);
  meta["seed"] = policy.seed;
  meta["config_digest"] = policy.config_digest;
  meta["catalog_digest"] = policy.catalog_digest;
  meta["training_steps"] = policy.training_steps;
  const std::string meta_text = meta.dump();
  const std::vector<std::uint8_t> weights = serialize_weights(policy.net);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write policy file '" + path.string() + "'");
  out.write(kPolicyMagic, 4);
  const std::uint32_t version = kPolicyVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint32_t meta_len = static_cast<std::uint32_t>(meta_text.size());
  out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  out.write(reinterpret_cast<const char*>(weights.data()),
            static_cast<std::streamsize>(weights.size()));
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

Policy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open policy file '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPolicyMagic, 4) != 0) {
    throw config_error("policy file '" + path.string() + "': bad magic");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kPolicyVersion) {
    throw config_error("policy file '" + path.string() + "': unsupported version");
  }
  std::uint32_t meta_len = 0;
  in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
  if (!in || meta_len > (1u << 20)) {
    throw config_error("policy file '" + path.string() + "': bad metadata length");
  }
  std::string meta_text(meta_len, '\0');
  in.read(meta_text.data(), meta_len);
  if (!in) throw config_error("policy file '" + path.string() + "': truncated metadata");

  Policy policy;
  try {
    const json meta = json::parse(meta_text);
    policy.kind = agent_kind_from_name(meta.at("kind").get<std::string>());
    policy.seed = meta.at("seed").get<std::uint64_t>();
    policy.config_digest = meta.at("config_digest").get<std::string>();
    policy.catalog_digest = meta.at("catalog_digest").get<std::string>();
    policy.training_steps = meta.at("training_steps").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw config_error("policy file '" + path.string() + "': bad metadata: " + e.what());
  }

  std::vector<std::uint8_t> weights((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
  policy.net = deserialize_weights(weights);
  return policy;
}

void save_metrics(std::span<const MetricsRow> metrics,
                  std::span<const std::pair<std::string, std::string>> header,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write metrics file '" + path.string() + "'");
  for (const auto& [k, v] : header) {
    out << "# " << k << "=" << v << "\n";
  }
  out << "step,loss,mean_episode_reward,exploration\n";
  for (const auto& row : metrics) {
    out << row.step << ',' << fmt_double(row.loss) << ','
        << fmt_double(row.mean_episode_reward) << ',' << fmt_double(row.exploration) << "\n";
  }
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace joinrl
