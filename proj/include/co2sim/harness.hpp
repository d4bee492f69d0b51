#pragma once

#include "co2sim/config.hpp"
#include "co2sim/outer_algorithms.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace co2sim {

struct RoundMetrics {
  int round = 0;
  double sim_time = 0.0;
  double train_loss = 0.0;
  double grad_sq_norm = 0.0;
  double divergence = 0.0;
  double stall_seconds = 0.0;
  double throughput = 0.0;  // cumulative samples per simulated second
};

struct SeedRunResult {
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> metrics;  // truncated if the run blew up
  std::vector<ReduceEvent> events;
  bool diverged = false;
  double final_loss = 0.0;      // +inf when diverged
  double final_grad_sq = 0.0;   // +inf when diverged
  double wall_time = 0.0;
  double total_stall = 0.0;
  double throughput = 0.0;
  ParamVector final_params;  // averaged; empty when diverged
};

struct ExperimentResult {
  RunConfig config;
  std::vector<SeedRunResult> seeds;
  double mean_final_loss = 0.0;  // +inf if any seed diverged
  double std_final_loss = 0.0;
  bool any_diverged = false;
};

// Runs run.repeats seeded replicas (seeds run.seed, run.seed + 1, ...).
// Metrics are evaluated at the averaged parameters after each round.  A
// replica that produces non-finite values is recorded as diverged with +inf
// final loss instead of aborting the experiment.
ExperimentResult run_experiment(const RunConfig& cfg);

// out_dir layout: seed_<s>/metrics.csv, seed_<s>/events.jsonl, summary.json.
// All bytes are deterministic functions of config and seed.
void write_experiment_outputs(const ExperimentResult& result,
                              const std::string& out_dir);
nlohmann::json summary_json(const ExperimentResult& result);

struct AblationRow {
  std::string variant;  // "full" | "no_penalty" | "no_clip"
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double final_grad_sq = 0.0;
  bool diverged = false;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // 3 variants x repeats, paired seeds
  double mean_full = 0.0;
  double mean_no_penalty = 0.0;
  double mean_no_clip = 0.0;
};

// Shared data and seeds across the three variants; divergence scores +inf.
AblationResult run_ablation(const RunConfig& cfg);
void write_ablation_csv(const AblationResult& result, const std::string& path);

struct ScalingRow {
  int workers = 0;
  int tau = 0;
  double comm_time = 0.0;
  double wall_time = 0.0;
  double throughput = 0.0;
  double overlap_ratio_achieved = 0.0;
  double scalability_vs_first = 0.0;  // against the first worker count, same tau
};

// Timing-model sweep over sweep.workers_list x sweep.tau_list.
std::vector<ScalingRow> run_scaling_sweep(const RunConfig& cfg);
void write_scaling_csv(const std::vector<ScalingRow>& rows,
                       const std::string& path);

// Replays a recorded trace fixture and compares every listed quantity,
// printing one line per comparison group.  Returns true when all match.
bool run_fixture_check(const std::string& fixture_path, std::ostream& out);

}  // namespace co2sim
