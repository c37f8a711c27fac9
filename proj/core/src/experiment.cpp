#include "joinrl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace joinrl {

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

namespace {

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_header_block(std::ofstream& out,
                        std::span<const std::pair<std::string, std::string>> header) {
  for (const auto& [k, v] : header) out << "# " << k << "=" << v << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Cost reports
// ---------------------------------------------------------------------------

std::vector<std::string> CostReport::planners() const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (std::find(out.begin(), out.end(), r.planner) == out.end()) out.push_back(r.planner);
  }
  return out;
}

std::vector<double> CostReport::costs_of(std::string_view planner) const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.planner == planner) out.push_back(r.cost);
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw runtime_error("percentile: empty sample");
  if (p < 0.0 || p > 1.0) throw runtime_error("percentile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<PlannerSummary> summarize(const CostReport& report) {
  std::vector<PlannerSummary> out;
  for (const auto& planner : report.planners()) {
    const std::vector<double> costs = report.costs_of(planner);
    PlannerSummary s;
    s.planner = planner;
    s.count = costs.size();
    s.min = percentile(costs, 0.0);
    s.p25 = percentile(costs, 0.25);
    s.median = percentile(costs, 0.5);
    s.p75 = percentile(costs, 0.75);
    s.max = percentile(costs, 1.0);
    s.outliers = detect_outliers(report, planner);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> detect_outliers(const CostReport& report, std::string_view planner) {
  std::vector<double> costs = report.costs_of(planner);
  if (costs.empty()) {
    throw config_error("detect_outliers: planner '" + std::string(planner) +
                       "' absent from report");
  }
  const double q1 = percentile(costs, 0.25);
  const double q3 = percentile(costs, 0.75);
  const double fence = q3 + 1.5 * (q3 - q1);
  std::vector<std::string> out;
  for (const auto& r : report.records) {
    if (r.planner == planner && r.cost > fence) out.push_back(r.query_id);
  }
  return out;
}

void save_cost_report(const CostReport& report, const std::filesystem::path& path,
                      bool with_latency) {
  auto out = open_out(path);
  write_header_block(out, report.header);
  out << "planner,query_id,relation_count,plan,cost,reward";
  if (with_latency) out << ",latency_us";
  out << "\n";
  for (const auto& r : report.records) {
    out << csv_quote(r.planner) << ',' << csv_quote(r.query_id) << ',' << r.relation_count
        << ',' << csv_quote(r.plan_text) << ',' << fmt_double(r.cost) << ','
        << fmt_double(r.reward);
    if (with_latency) out << ',' << fmt_double(r.latency_us);
    out << "\n";
  }
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

CostReport load_cost_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open cost report '" + path.string() + "'");
  CostReport report;
  std::string line;
  bool saw_columns = false;
  bool has_latency = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        report.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      }
      continue;
    }
    if (!saw_columns) {
      saw_columns = true;
      has_latency = line.find("latency_us") != std::string::npos;
      continue;
    }
    const auto fields = csv_split(line);
    if (fields.size() < 6) {
      throw config_error("cost report: malformed row '" + line + "'");
    }
    CostRecord r;
    r.planner = fields[0];
    r.query_id = fields[1];
    r.relation_count = static_cast<std::size_t>(parse_double(fields[2], "relation_count"));
    r.plan_text = fields[3];
    r.cost = parse_double(fields[4], "cost");
    r.reward = parse_double(fields[5], "reward");
    if (has_latency && fields.size() > 6) r.latency_us = parse_double(fields[6], "latency_us");
    report.records.push_back(std::move(r));
  }
  return report;
}

void save_cost_summary(const CostReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_header_block(out, report.header);
  out << "planner,count,min,p25,median,p75,max,outliers\n";
  for (const auto& s : summarize(report)) {
    std::string outliers;
    for (std::size_t i = 0; i < s.outliers.size(); ++i) {
      if (i) outliers += ';';
      outliers += s.outliers[i];
    }
    out << csv_quote(s.planner) << ',' << s.count << ',' << fmt_double(s.min) << ','
        << fmt_double(s.p25) << ',' << fmt_double(s.median) << ',' << fmt_double(s.p75) << ','
        << fmt_double(s.max) << ',' << csv_quote(outliers) << "\n";
  }
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

AgentRun agent_run_from_preset(const AgentPreset& preset) {
  AgentRun run;
  run.label = preset.name;
  run.kind = preset.kind;
  run.variant = preset.variant;
  if (preset.dqn) run.dqn = *preset.dqn;
  if (preset.ppo) run.ppo = *preset.ppo;
  return run;
}

namespace {

std::uint64_t member_seed(std::uint64_t master, std::size_t fold, std::size_t agent,
                          std::size_t seed_index) {
  return mix_seed(master, (static_cast<std::uint64_t>(fold) << 16) |
                              (static_cast<std::uint64_t>(agent) << 8) | seed_index);
}

CostRecord record_of(const std::string& planner, const JoinQuery& query, const PlanPtr& plan,
                     double plan_cost, std::chrono::nanoseconds latency,
                     const CostParams& params) {
  CostRecord r;
  r.planner = planner;
  r.query_id = query.id;
  r.relation_count = query.relation_count();
  r.plan_text = plan_to_text(*plan);
  r.cost = plan_cost;
  r.reward = reward_from_cost(plan_cost, params);
  r.latency_us = std::chrono::duration<double, std::micro>(latency).count();
  return r;
}

}  // namespace

ExperimentResult run_experiment(const Catalog& catalog, const CardinalityProvider& provider,
                                const CostParams& params, const Workload& workload,
                                const Split& split, const ExperimentConfig& config) {
  if (split.folds.empty()) throw config_error("run_experiment: empty split");
  if (config.seeds_per_agent == 0) {
    throw config_error("run_experiment: seeds_per_agent must be > 0");
  }
  for (const auto& fold : split.folds) {
    if (fold.test.empty()) throw config_error("run_experiment: fold with empty test set");
    if (fold.train.empty() && !config.agents.empty()) {
      throw config_error("run_experiment: fold with empty training set");
    }
  }

  EnvFactory factory{&catalog, &provider, params, EnvOptions{}};

  struct Task {
    std::size_t fold, agent, seed_index;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    for (std::size_t a = 0; a < config.agents.size(); ++a) {
      for (std::size_t s = 0; s < config.seeds_per_agent; ++s) {
        tasks.push_back({f, a, s, member_seed(config.master_seed, f, a, s)});
      }
    }
  }

  std::vector<TrainResult> outputs(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      const AgentRun& agent = config.agents[task.agent];
      try {
        std::vector<const JoinQuery*> train;
        for (const auto& id : split.folds[task.fold].train) {
          train.push_back(&workload.query(id));
        }
        if (agent.kind == AgentKind::PPO) {
          outputs[i] = train_ppo(factory, train, agent.ppo, task.seed);
        } else {
          outputs[i] = train_dqn(factory, train, agent.dqn, task.seed, agent.variant);
        }
      } catch (const std::exception& e) {
        failures[i] = "fold " + std::to_string(task.fold) + " agent '" + agent.label +
                      "' seed " + std::to_string(task.seed_index) + ": " + e.what();
      }
    }
  };
  const std::size_t thread_count = std::max<std::size_t>(1, std::min(config.jobs, tasks.size()));
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& failure : failures) {
    if (!failure.empty()) throw runtime_error("training failed: " + failure);
  }

  ExperimentResult result;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& task = tasks[i];
    TrainedMember member;
    member.fold = task.fold;
    member.agent_label = config.agents[task.agent].label;
    member.seed_index = task.seed_index;
    member.seed = task.seed;
    member.policy = std::move(outputs[i].policy);
    member.metrics = std::move(outputs[i].metrics);
    result.members.push_back(std::move(member));
  }

  // Evaluation: members, ensembles, and the DP baseline per fold test set.
  JoinEnv env = factory.make();
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    CostReport report;
    report.header.emplace_back("schema", "cost_report_v1");
    report.header.emplace_back("master_seed", std::to_string(config.master_seed));
    report.header.emplace_back("catalog_digest", catalog.digest());
    report.header.emplace_back("fold", std::to_string(f));

    for (const auto& id : split.folds[f].test) {
      const JoinQuery& query = workload.query(id);
      for (std::size_t a = 0; a < config.agents.size(); ++a) {
        const std::string& label = config.agents[a].label;
        std::vector<const Policy*> members;
        for (const auto& m : result.members) {
          if (m.fold == f && m.agent_label == label) members.push_back(&m.policy);
        }
        if (config.evaluate_members) {
          for (std::size_t s = 0; s < members.size(); ++s) {
            const PlannedQuery planned = plan_query(*members[s], query, env);
            report.records.push_back(record_of(label + "#s" + std::to_string(s), query,
                                               planned.plan, planned.cost, planned.latency,
                                               params));
          }
        }
        const EnsemblePlan ens = ensemble_plan(members, query, env);
        report.records.push_back(
            record_of(label + "-ens", query, ens.plan, ens.cost, ens.latency, params));
      }
      if (config.evaluate_dp) {
        const DpResult dp = dp_left_deep(query, provider, catalog, params, query.cross_product);
        report.records.push_back(record_of("dp", query, dp.plan, dp.cost, dp.elapsed, params));
      }
    }
    result.fold_reports.push_back(std::move(report));
  }

  result.aggregate.header = {{"schema", "cost_report_v1"},
                             {"master_seed", std::to_string(config.master_seed)},
                             {"catalog_digest", catalog.digest()},
                             {"folds", std::to_string(split.folds.size())}};
  std::set<std::pair<std::string, std::string>> seen;  // (planner, query) dedup
  for (const auto& fold_report : result.fold_reports) {
    for (const auto& r : fold_report.records) {
      if (seen.insert({r.planner, r.query_id}).second) {
        result.aggregate.records.push_back(r);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Latency benchmark
// ---------------------------------------------------------------------------

const LatencyBucket* LatencyReport::bucket(std::string_view planner,
                                           std::size_t relation_count) const {
  for (const auto& b : buckets) {
    if (b.planner == planner && b.relation_count == relation_count) return &b;
  }
  return nullptr;
}

LatencyReport latency_benchmark(std::span<const LatencyPlanner> planners,
                                const Workload& workload, std::size_t repetitions) {
  if (repetitions == 0) throw config_error("latency_benchmark: repetitions must be > 0");
  if (planners.empty()) throw config_error("latency_benchmark: no planners");
  std::set<std::size_t> counts;
  for (const auto& q : workload.queries) counts.insert(q.relation_count());
  if (counts.size() < 4) {
    throw config_error("latency_benchmark: workload spans only " +
                       std::to_string(counts.size()) +
                       " distinct relation counts (need >= 4)");
  }

  LatencyReport report;
  report.header.emplace_back("schema", "latency_report_v1");
  report.header.emplace_back("repetitions", std::to_string(repetitions));

  for (const auto& planner : planners) {
    std::map<std::size_t, std::vector<double>> samples;  // k -> run latencies (us)
    std::map<std::size_t, std::set<std::string>> bucket_queries;
    for (const auto& q : workload.queries) {
      for (std::size_t rep = 0; rep < repetitions; ++rep) {
        const auto start = std::chrono::steady_clock::now();
        planner.plan(q);
        const auto elapsed = std::chrono::steady_clock::now() - start;
        samples[q.relation_count()].push_back(
            std::chrono::duration<double, std::micro>(elapsed).count());
      }
      bucket_queries[q.relation_count()].insert(q.id);
    }

    std::vector<std::pair<double, double>> points;  // (k, median)
    for (const auto& [k, runs] : samples) {
      LatencyBucket bucket;
      bucket.planner = planner.name;
      bucket.relation_count = k;
      bucket.queries = bucket_queries[k].size();
      bucket.repetitions = repetitions;
      bucket.mean_us = std::accumulate(runs.begin(), runs.end(), 0.0) /
                       static_cast<double>(runs.size());
      bucket.median_us = percentile(runs, 0.5);
      points.emplace_back(static_cast<double>(k), bucket.median_us);
      report.buckets.push_back(std::move(bucket));
    }

    LatencyFit fit;
    fit.planner = planner.name;
    fit.combinatorial = planner.combinatorial;
    // Least squares over (relation count, bucket median).
    const double n = static_cast<double>(points.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : points) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (denom != 0.0) {
      fit.slope_us_per_relation = (n * sxy - sx * sy) / denom;
      fit.intercept_us = (sy - fit.slope_us_per_relation * sx) / n;
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      fit.ratios.emplace_back(static_cast<std::size_t>(points[i - 1].first),
                              static_cast<std::size_t>(points[i].first),
                              points[i].second / points[i - 1].second);
    }
    report.fits.push_back(std::move(fit));
  }
  return report;
}

void save_latency_report(const LatencyReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_header_block(out, report.header);
  out << "planner,relation_count,queries,repetitions,mean_us,median_us\n";
  for (const auto& b : report.buckets) {
    out << csv_quote(b.planner) << ',' << b.relation_count << ',' << b.queries << ','
        << b.repetitions << ',' << fmt_double(b.mean_us) << ',' << fmt_double(b.median_us)
        << "\n";
  }
  out << "\n";
  out << "planner,kind,slope_us_per_relation,intercept_us,ratios\n";
  for (const auto& f : report.fits) {
    std::string ratios;
    for (std::size_t i = 0; i < f.ratios.size(); ++i) {
      const auto& [from, to, ratio] = f.ratios[i];
      if (i) ratios += ';';
      ratios += std::to_string(from) + "->" + std::to_string(to) + ":" + fmt_double(ratio);
    }
    out << csv_quote(f.planner) << ',' << (f.combinatorial ? "combinatorial" : "linear") << ','
        << fmt_double(f.slope_us_per_relation) << ',' << fmt_double(f.intercept_us) << ','
        << csv_quote(ratios) << "\n";
  }
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Occurrence counts
// ---------------------------------------------------------------------------

std::vector<OccurrenceRow> occurrence_report(const Workload& workload, const Split& split,
                                             std::span<const std::string> outlier_ids) {
  for (const auto& id : outlier_ids) {
    if (!workload.has_query(id)) {
      throw config_error("occurrence_report: unknown query id '" + id + "'");
    }
  }
  std::map<std::string, OccurrenceRow> rows;
  for (const auto& q : workload.queries) {
    for (const auto& t : q.relations) rows[t].table = t;
  }
  for (const auto& fold : split.folds) {
    for (const auto& id : fold.train) {
      for (const auto& t : workload.query(id).relations) rows[t].train_count += 1;
    }
    for (const auto& id : fold.test) {
      for (const auto& t : workload.query(id).relations) rows[t].test_count += 1;
    }
  }
  for (const auto& id : outlier_ids) {
    for (const auto& t : workload.query(id).relations) rows[t].outlier_count += 1;
  }
  std::vector<OccurrenceRow> out;
  for (auto& [_, row] : rows) out.push_back(std::move(row));
  return out;
}

void save_occurrence_report(std::span<const OccurrenceRow> rows,
                            const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "table,train_count,test_count,outlier_count\n";
  for (const auto& r : rows) {
    out << csv_quote(r.table) << ',' << r.train_count << ',' << r.test_count << ','
        << r.outlier_count << "\n";
  }
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace joinrl
