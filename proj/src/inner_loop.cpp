#include "co2sim/inner_loop.hpp"

#include "co2sim/errors.hpp"

#include <cmath>

namespace co2sim {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::warmup_cosine: return "warmup_cosine";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "warmup_cosine") return ScheduleKind::warmup_cosine;
  throw validation_error("unknown schedule kind: " + name);
}

void InnerSchedule::validate() const {
  if (!(base_lr > 0.0)) {
    throw validation_error("schedule: base_lr must be positive");
  }
  if (total_rounds < 1) {
    throw validation_error("schedule: total_rounds must be >= 1");
  }
  if (kind == ScheduleKind::warmup_cosine) {
    if (warmup_rounds < 1 || warmup_rounds >= total_rounds) {
      throw validation_error(
          "schedule: warmup_rounds must be in [1, total_rounds)");
    }
  }
}

double lr_at(const InnerSchedule& schedule, int t, int /*k*/) {
  if (t < 0 || t >= schedule.total_rounds) {
    throw validation_error("lr_at: round index out of range");
  }
  switch (schedule.kind) {
    case ScheduleKind::constant:
      return schedule.base_lr;
    case ScheduleKind::cosine:
      return schedule.base_lr * 0.5 *
             (1.0 + std::cos(M_PI * static_cast<double>(t) /
                             schedule.total_rounds));
    case ScheduleKind::warmup_cosine: {
      if (t < schedule.warmup_rounds) {
        return schedule.base_lr * static_cast<double>(t + 1) /
               schedule.warmup_rounds;
      }
      double progress = static_cast<double>(t - schedule.warmup_rounds) /
                        (schedule.total_rounds - schedule.warmup_rounds);
      return schedule.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
    }
  }
  throw validation_error("lr_at: unknown schedule kind");
}

InnerTrace run_inner_loop(WorkerState& worker, const Problem& problem,
                          const DataShard& shard, const InnerSchedule& schedule,
                          int tau, int t, const InnerOptions& options) {
  if (tau < 1) throw validation_error("run_inner_loop: tau must be >= 1");
  if (options.momentum < 0.0 || options.momentum >= 1.0) {
    throw validation_error("run_inner_loop: inner momentum outside [0, 1)");
  }

  InnerTrace trace;
  trace.x_start = worker.params;
  trace.grads.reserve(tau);
  trace.batch_losses.reserve(tau);

  // Velocity is scoped to one inner loop.
  ParamVector velocity;
  if (options.momentum > 0.0) {
    velocity = ParamVector::Zero(problem.dimension);
  }

  for (int k = 0; k < tau; ++k) {
    double lr = lr_at(schedule, t, k);
    GradSample g = stochastic_gradient(problem, shard, worker.params,
                                       options.batch_size, worker.rng);
    if (options.momentum > 0.0) {
      velocity = options.momentum * velocity + g.gradient;
      worker.params -= lr * velocity;
    } else {
      worker.params -= lr * g.gradient;
    }
    ensure_finite(worker.params, "inner step");
    trace.grads.push_back(std::move(g.gradient));
    trace.batch_losses.push_back(g.batch_loss);
    if (k == 0) {
      trace.x_first = worker.params;
    }
  }
  trace.x_end = worker.params;
  trace.steps = tau;
  return trace;
}

}  // namespace co2sim
