#pragma once

#include "co2sim/algorithm_kind.hpp"
#include "co2sim/collective.hpp"
#include "co2sim/inner_loop.hpp"
#include "co2sim/outer_algorithms.hpp"
#include "co2sim/problems.hpp"
#include "co2sim/timing_model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace co2sim {

// Experiment description, loaded from JSON.  Unknown keys anywhere are
// rejected so typos cannot silently fall back to defaults; required keys are
// problem.kind, schedule.base_lr, inner.tau, inner.batch_size, run.workers,
// and run.rounds.
struct RunConfig {
  struct ProblemSection {
    ProblemKind kind = ProblemKind::quadratic;
    int dimension = 16;
    int samples = 1024;
    double condition_number = 10.0;
    double noise = 0.1;
    int hidden_width = 8;           // mlp only
    std::uint64_t seed = 1;         // dataset family; combined with run seed
    double heterogeneity = 0.0;
  } problem;

  struct AlgorithmSection {
    AlgorithmKind kind = AlgorithmKind::co2;
    double alpha = 1.0;
    double beta = 0.7;
    double phi = 1.0;
    double epsilon = 1e-12;
    bool penalty = true;
    bool clip = true;
    bool ghost_consistent = false;
  } algorithm;

  struct ScheduleSection {
    ScheduleKind kind = ScheduleKind::constant;
    double base_lr = 0.0;
    int warmup_rounds = 0;
  } schedule;

  struct InnerSection {
    int tau = 0;
    int batch_size = 0;
    double momentum = 0.0;
  } inner;

  struct ClusterSection {
    int gpus_per_node = 8;
    double t_comp = 0.0;
    double t_outer = 0.0;
    std::optional<double> param_bytes;  // defaults to 8 * problem dimension
    double inter_bandwidth = 1.0e9;
    double latency = 0.0;
    std::optional<double> measured_override;
  } cluster;

  struct RunSection {
    int workers = 0;
    int rounds = 0;
    std::uint64_t seed = 7;
    int repeats = 5;
    CommMode comm_mode = CommMode::simulated;
    std::optional<std::string> out_dir;
  } run;

  struct SweepSection {
    std::vector<int> workers_list;  // defaults to [run.workers]
    std::vector<int> tau_list;      // defaults to [inner.tau]
  } sweep;

  void validate() const;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json emit_config(const RunConfig& cfg);
bool operator==(const RunConfig& a, const RunConfig& b);

// Dataset seed for one repeat: the problem's seed family combined with the
// run seed, so repeats draw fresh data deterministically.
std::uint64_t effective_problem_seed(const RunConfig& cfg, std::uint64_t run_seed);

Problem build_problem(const RunConfig& cfg, std::uint64_t run_seed);

// SimSetup for one seeded replica.  param_bytes defaults from the problem
// dimension; schedule.total_rounds comes from run.rounds.
SimSetup build_setup(const RunConfig& cfg, std::uint64_t run_seed,
                     const Problem& problem);

}  // namespace co2sim
