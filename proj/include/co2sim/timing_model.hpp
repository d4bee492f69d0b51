#pragma once

#include "co2sim/algorithm_kind.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace co2sim {

// Cluster description for the analytic timing model.  Times are seconds,
// bandwidth is bytes per second.
struct ClusterSpec {
  int workers = 1;
  int gpus_per_node = 8;
  double t_comp = 0.0;   // one inner step
  double t_outer = 0.0;  // one outer update
  double param_bytes = 0.0;
  double inter_bandwidth = 1.0;
  double latency = 0.0;  // per ring hop
  std::optional<double> measured_override;  // replaces the ring formula

  void validate() const;
};

// Ring all-reduce estimate:
//   2 (G - 1) latency + 2 ((G - 1) / G) param_bytes / inter_bandwidth.
// A single worker reduces nothing and costs zero; measured_override wins
// otherwise.
double allreduce_time(const ClusterSpec& spec);

// Fraction of the communication hidden by tau steps of compute:
// min(1, tau * t_comp / t_comm); defined as 1 when t_comm <= 0.
double overlap_ratio(int tau, double t_comp, double t_comm);

// Relative scaling efficiency between two measured throughputs:
// (throughput_large / throughput_small) / (workers_large / workers_small).
double scalability_ratio(double throughput_small, double throughput_large,
                         double workers_small, double workers_large);

struct RoundTiming {
  int t = 0;
  double start = 0.0;
  double stall = 0.0;
  double end = 0.0;
};

struct TimelineReport {
  AlgorithmKind kind = AlgorithmKind::co2;
  int workers = 0;
  int tau = 0;
  int rounds = 0;
  int batch_size = 0;
  double comm_time = 0.0;  // one all-reduce under the spec
  double wall_time = 0.0;
  double total_stall = 0.0;
  double overlap_ratio_achieved = 0.0;  // 1 - stall / waited communication
  double throughput = 0.0;  // samples per second, rounds*tau*G*batch / wall
  std::vector<RoundTiming> per_round;
};

nlohmann::json to_json(const TimelineReport& report);

// Plays the per-round communication pattern of one algorithm against the
// analytic model, with no numerics involved.
//   co2:               wait on the previous round's reduce after tau steps
//   slowmo/local_sgd:  blocking reduce every round
//   overlap_local_sgd: reduce overlaps the next round's compute
//   sync_sgd:          blocking gradient reduce every step
TimelineReport simulate_timeline(AlgorithmKind kind, const ClusterSpec& spec,
                                 int tau, int rounds, int batch_size = 1);

}  // namespace co2sim
