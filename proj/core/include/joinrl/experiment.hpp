#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "joinrl/agents.hpp"
#include "joinrl/dp.hpp"
#include "joinrl/workload.hpp"

namespace joinrl {

// ---------------------------------------------------------------------------
// Cost reports
// ---------------------------------------------------------------------------

struct CostRecord {
  std::string planner;
  std::string query_id;
  std::size_t relation_count = 0;
  std::string plan_text;
  double cost = 0.0;
  double reward = 0.0;
  double latency_us = 0.0;
};

struct CostReport {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<CostRecord> records;

  std::vector<std::string> planners() const;
  std::vector<double> costs_of(std::string_view planner) const;
};

struct PlannerSummary {
  std::string planner;
  std::size_t count = 0;
  double min = 0.0, p25 = 0.0, median = 0.0, p75 = 0.0, max = 0.0;
  std::vector<std::string> outliers;  // query ids beyond p75 + 1.5*IQR
};

/// Percentile by linear interpolation between order statistics
/// (rank = p * (n - 1)).
double percentile(std::vector<double> values, double p);

std::vector<PlannerSummary> summarize(const CostReport& report);

/// Query ids whose cost strictly exceeds p75 + 1.5*IQR for the planner.
std::vector<std::string> detect_outliers(const CostReport& report, std::string_view planner);

/// costs.csv: '#'-prefixed header block, then one row per record. Latencies
/// are measured wall-clock, so they are written only on request to keep the
/// default output byte-reproducible.
void save_cost_report(const CostReport& report, const std::filesystem::path& path,
                      bool with_latency = false);
CostReport load_cost_report(const std::filesystem::path& path);
void save_cost_summary(const CostReport& report, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiment orchestration
// ---------------------------------------------------------------------------

struct AgentRun {
  std::string label;  // preset or user-supplied name; prefixes planner ids
  AgentKind kind = AgentKind::DQN;
  DqnVariant variant = DqnVariant::Vanilla;
  DqnConfig dqn;
  PpoConfig ppo;
};

AgentRun agent_run_from_preset(const AgentPreset& preset);

struct ExperimentConfig {
  std::vector<AgentRun> agents;
  std::size_t seeds_per_agent = 1;
  std::uint64_t master_seed = 0;
  std::size_t jobs = 1;
  bool evaluate_dp = true;
  bool evaluate_members = true;
};

struct TrainedMember {
  std::size_t fold = 0;
  std::string agent_label;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  Policy policy;
  std::vector<MetricsRow> metrics;
};

struct ExperimentResult {
  std::vector<TrainedMember> members;
  std::vector<CostReport> fold_reports;
  CostReport aggregate;  // every workload query once per planner
};

/// Per fold: trains every agent with every derived seed on the training
/// side, then evaluates members, ensembles, and the DP baseline on the test
/// side. Seeds derive from the master seed; training tasks may run on
/// `jobs` threads without affecting results.
ExperimentResult run_experiment(const Catalog& catalog, const CardinalityProvider& provider,
                                const CostParams& params, const Workload& workload,
                                const Split& split, const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Latency benchmark
// ---------------------------------------------------------------------------

struct LatencyPlanner {
  std::string name;
  /// Grows combinatorially with relation count (reported as bucket ratios
  /// instead of a linear fit).
  bool combinatorial = false;
  std::function<void(const JoinQuery&)> plan;
};

struct LatencyBucket {
  std::string planner;
  std::size_t relation_count = 0;
  std::size_t queries = 0;
  std::size_t repetitions = 0;
  double mean_us = 0.0;
  double median_us = 0.0;
};

struct LatencyFit {
  std::string planner;
  bool combinatorial = false;
  double slope_us_per_relation = 0.0;  // least squares over bucket medians
  double intercept_us = 0.0;
  /// (from_k, to_k, median ratio) between consecutive buckets.
  std::vector<std::tuple<std::size_t, std::size_t, double>> ratios;
};

struct LatencyReport {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<LatencyBucket> buckets;
  std::vector<LatencyFit> fits;

  const LatencyBucket* bucket(std::string_view planner, std::size_t relation_count) const;
};

/// Requires the workload to span at least 4 distinct relation counts and
/// repetitions >= 1.
LatencyReport latency_benchmark(std::span<const LatencyPlanner> planners,
                                const Workload& workload, std::size_t repetitions);

void save_latency_report(const LatencyReport& report, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Table occurrence counts
// ---------------------------------------------------------------------------

struct OccurrenceRow {
  std::string table;
  std::uint64_t train_count = 0;    // summed over folds
  std::uint64_t test_count = 0;     // summed over folds
  std::uint64_t outlier_count = 0;  // over the designated outlier queries
};

std::vector<OccurrenceRow> occurrence_report(const Workload& workload, const Split& split,
                                             std::span<const std::string> outlier_ids);

void save_occurrence_report(std::span<const OccurrenceRow> rows,
                            const std::filesystem::path& path);

}  // namespace joinrl
