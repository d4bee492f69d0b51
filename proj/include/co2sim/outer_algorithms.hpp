#pragma once

#include "co2sim/algorithm_kind.hpp"
#include "co2sim/collective.hpp"
#include "co2sim/inner_loop.hpp"
#include "co2sim/param_ops.hpp"
#include "co2sim/problems.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace co2sim {

// Outer-update constants shared by the momentum-based algorithms.
struct Co2Hyper {
  double alpha = 1.0;
  double beta = 0.7;
  double phi = 1.0;
  double epsilon = 1e-12;
  bool penalty = true;
  bool clip = true;
  // Drive the gap, momentum, and outer iterate from cross-worker averaged
  // snapshots instead of worker-local ones; all workers then share the same
  // outer iterate.
  bool ghost_consistent = false;

  void validate() const;
};

// Per-coordinate staleness of the last outer displacement relative to the
// first inner step that produced it:
//   gap[j] = |x_t0 - prev_x0|[j] / max(tau * |prev_x1 - prev_x0|[j], epsilon) + 1.
// Every coordinate is >= 1 by construction; a stalled coordinate
// (prev_x1 == prev_x0) falls back to the epsilon floor.
ParamVector staleness_gap(const ParamVector& x_t0, const ParamVector& prev_x0,
                          const ParamVector& prev_x1, int tau, double epsilon);

// m[j] = beta * m_prev[j] + delta[j] / gap[j]   (penalty enabled)
// m[j] = beta * m_prev[j] + delta[j]            (penalty disabled)
// Requires beta in [0, 1) and, when the penalty is applied, gap >= 1.
ParamVector penalized_momentum_update(const ParamVector& m_prev, double beta,
                                      const ParamVector& gap,
                                      const ParamVector& delta,
                                      bool penalty_enabled);

// x_t0 - alpha * clamp(m, [-phi, phi]), or without the clamp when disabled.
ParamVector outer_iterate(const ParamVector& x_t0, double alpha,
                          const ParamVector& m, double phi, bool clip_enabled);

// Worker-local outer bookkeeping.  Only the all-reduce result is global;
// snapshots, gap, and momentum belong to one worker.
struct OuterState {
  int t = 0;
  ParamVector momentum;           // zeros until the first outer update
  ParamVector gap;                // ones until first computed
  ParamVector prev_x0, prev_x1;   // x_{t-1,0} and x_{t-1,1} snapshots
  ParamVector anchor;             // overlap_local_sgd only
  std::optional<std::uint64_t> pending;
};

struct RoundResult {
  double stall_seconds = 0.0;
  bool outer_applied = false;
  double min_gap = std::numeric_limits<double>::infinity();
  double max_outer_step = 0.0;  // largest |x_{t+1,0} - x_{t,0}| coordinate
  ParamVector consumed_average;  // empty when no reduce was consumed
};

// One outer round after the inner loops have run (traces[i] belongs to
// workers[i], whose params currently hold x_{t,tau}).
//
// co2: launch the reduce of x_{t,tau}, then consume the previous round's
// reduce and apply the gap-penalized, clipped momentum step from x_{t,0}.
// Round 0 only records snapshots and keeps x_{1,0} = x_{0,tau} worker-local.
RoundResult co2_round(std::vector<WorkerState>& workers,
                      std::vector<OuterState>& outer,
                      const std::vector<InnerTrace>& traces, int tau,
                      CollectiveEngine& engine, Clock& clock,
                      const Co2Hyper& hyper);

// Blocking reduce of x_{t,tau}; momentum over the raw displacement
// x_{t,0} - avg, no gap penalty, no clip.
RoundResult slowmo_round(std::vector<WorkerState>& workers,
                         std::vector<OuterState>& outer,
                         const std::vector<InnerTrace>& traces,
                         CollectiveEngine& engine, Clock& clock, double alpha,
                         double beta);

// Blocking reduce; every worker adopts the average.
RoundResult local_sgd_round(std::vector<WorkerState>& workers,
                            std::vector<OuterState>& outer,
                            const std::vector<InnerTrace>& traces,
                            CollectiveEngine& engine, Clock& clock);

// Anchor-correction scheme: consume last round's anchor average if pending,
// apply x -= (anchor - avg), then launch a reduce of fresh anchors; an
// instantly-complete reduce is consumed in the same round, which makes the
// zero-delay case coincide with local_sgd.
RoundResult overlap_local_sgd_round(std::vector<WorkerState>& workers,
                                    std::vector<OuterState>& outer,
                                    const std::vector<InnerTrace>& traces,
                                    CollectiveEngine& engine, Clock& clock);

// Fully synchronous data-parallel SGD: tau steps, each a blocking gradient
// reduce followed by the shared update.  Workers stay bit-identical.
// Advances the clock by t_comp per step itself; returns the summed averaged
// gradients for diagnostics.
RoundResult sync_sgd_round(std::vector<WorkerState>& workers,
                           const Problem& problem,
                           const std::vector<DataShard>& shards,
                           const InnerSchedule& schedule,
                           const InnerOptions& options, int tau, int t,
                           double t_comp, CollectiveEngine& engine,
                           Clock& clock, ParamVector* grad_sum_out);

struct SimSetup {
  AlgorithmKind kind = AlgorithmKind::co2;
  int workers = 1;
  int tau = 1;
  Co2Hyper hyper;
  InnerSchedule schedule;
  InnerOptions inner;
  std::uint64_t seed = 0;
  ClusterSpec cluster;
  CommMode comm_mode = CommMode::simulated;
  double heterogeneity = 0.0;
  // Fixtures: explicit row partition and initial parameters.
  std::optional<std::vector<std::vector<int>>> explicit_shards;
  std::optional<ParamVector> init_params;
  // Keep per-round inner traces on the RoundRecord (fixture checking).
  bool capture_traces = false;
};

struct RoundRecord {
  int t = 0;
  double sim_time = 0.0;
  double stall_seconds = 0.0;
  double divergence = 0.0;  // max_i ||x_i - xbar|| at round end
  double mean_batch_loss = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  double max_outer_step = 0.0;
  bool outer_applied = false;
  ParamVector xbar_end;        // average params after the round
  ParamVector xbar_start;      // average of x_{t,0}
  ParamVector mean_grad_sum;   // average over workers of summed inner grads
  ParamVector consumed_average;    // reduce result consumed this round, if any
  std::vector<InnerTrace> traces;  // populated only under capture_traces
};

// Owns workers, shards, outer state, clock, and the collective engine for
// one seeded run.  The problem must outlive the simulation.
class Simulation {
 public:
  Simulation(const Problem& problem, SimSetup setup);

  RoundRecord step();
  int round() const { return round_; }

  const std::vector<WorkerState>& workers() const { return workers_; }
  const std::vector<OuterState>& outer_states() const { return outer_; }
  const std::vector<DataShard>& shards() const { return shards_; }
  CollectiveEngine& engine() { return engine_; }
  Clock& clock() { return clock_; }
  const SimSetup& setup() const { return setup_; }
  ParamVector average_params() const;

 private:
  const Problem* problem_;
  SimSetup setup_;
  std::vector<DataShard> shards_;
  std::vector<WorkerState> workers_;
  std::vector<OuterState> outer_;
  CollectiveEngine engine_;
  Clock clock_;
  int round_ = 0;
};

}  // namespace co2sim
