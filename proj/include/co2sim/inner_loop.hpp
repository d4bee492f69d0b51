#pragma once

#include "co2sim/param_ops.hpp"
#include "co2sim/problems.hpp"
#include "co2sim/rng.hpp"

#include <string>
#include <vector>

namespace co2sim {

enum class ScheduleKind { constant, cosine, warmup_cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Learning rate as a function of the outer round t; constant across the
// inner steps of a round so update telescoping holds.
//   constant:       base_lr
//   cosine:         base_lr * 0.5 * (1 + cos(pi * t / total_rounds))
//   warmup_cosine:  base_lr * (t + 1) / warmup_rounds while t < warmup_rounds,
//                   then cosine over the remaining rounds.
// Always strictly positive for t in [0, total_rounds).
struct InnerSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 0.0;
  int total_rounds = 1;
  int warmup_rounds = 0;

  void validate() const;
};

double lr_at(const InnerSchedule& schedule, int t, int k);

struct InnerOptions {
  int batch_size = 1;
  double momentum = 0.0;  // heavy-ball coefficient for the inner steps; off by default
};

struct WorkerState {
  int index = 0;
  ParamVector params;
  RngStream rng;

  WorkerState(int index_, ParamVector params_, std::uint64_t run_seed)
      : index(index_),
        params(std::move(params_)),
        rng(run_seed, static_cast<std::uint64_t>(index_)) {}
};

// Everything the outer algorithms need from one inner loop:
// x_start = x_{t,0}, x_first = x_{t,1}, x_end = x_{t,tau}, plus the
// per-step stochastic gradients in order.
struct InnerTrace {
  ParamVector x_start;
  ParamVector x_first;
  ParamVector x_end;
  std::vector<ParamVector> grads;
  std::vector<double> batch_losses;
  int steps = 0;
};

// Runs tau steps of x <- x - lr_at(schedule, t, k) * g on the worker's shard,
// mutating worker.params, and returns the trace.  With tau = 1, x_first and
// x_end coincide.
InnerTrace run_inner_loop(WorkerState& worker, const Problem& problem,
                          const DataShard& shard, const InnerSchedule& schedule,
                          int tau, int t, const InnerOptions& options);

}  // namespace co2sim
