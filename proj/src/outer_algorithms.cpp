#include "co2sim/outer_algorithms.hpp"

#include "co2sim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace co2sim {

namespace {

std::vector<ParamVector> collect_params(const std::vector<WorkerState>& workers) {
  std::vector<ParamVector> out;
  out.reserve(workers.size());
  for (const WorkerState& w : workers) {
    out.push_back(w.params);
  }
  return out;
}

std::uint64_t shared_pending(const std::vector<OuterState>& outer) {
  if (!outer.front().pending) {
    throw validation_error("outer round: no pending reduce to consume");
  }
  std::uint64_t h = *outer.front().pending;
  for (const OuterState& st : outer) {
    if (!st.pending || *st.pending != h) {
      throw validation_error("outer round: pending handles diverged");
    }
  }
  return h;
}

}  // namespace

void Co2Hyper::validate() const {
  if (!(alpha > 0.0)) throw validation_error("hyper: alpha must be positive");
  if (beta < 0.0 || beta >= 1.0) {
    throw validation_error("hyper: beta must lie in [0, 1)");
  }
  if (!(phi > 0.0)) throw validation_error("hyper: phi must be positive");
  if (!(epsilon > 0.0)) {
    throw validation_error("hyper: epsilon must be positive");
  }
}

ParamVector staleness_gap(const ParamVector& x_t0, const ParamVector& prev_x0,
                          const ParamVector& prev_x1, int tau, double epsilon) {
  if (tau < 1) throw validation_error("staleness_gap: tau must be >= 1");
  if (!(epsilon > 0.0)) {
    throw validation_error("staleness_gap: epsilon must be positive");
  }
  if (x_t0.size() != prev_x0.size() || prev_x0.size() != prev_x1.size()) {
    throw validation_error("staleness_gap: dimensions differ");
  }
  ParamVector numer = (x_t0 - prev_x0).cwiseAbs();
  ParamVector denom = (static_cast<double>(tau) * (prev_x1 - prev_x0))
                          .cwiseAbs()
                          .cwiseMax(epsilon);
  ParamVector gap = numer.cwiseQuotient(denom).array() + 1.0;
  ensure_finite(gap, "staleness_gap");
  return gap;
}

ParamVector penalized_momentum_update(const ParamVector& m_prev, double beta,
                                      const ParamVector& gap,
                                      const ParamVector& delta,
                                      bool penalty_enabled) {
  if (beta < 0.0 || beta >= 1.0) {
    throw validation_error("momentum update: beta must lie in [0, 1)");
  }
  if (m_prev.size() != delta.size()) {
    throw validation_error("momentum update: dimensions differ");
  }
  ParamVector m;
  if (penalty_enabled) {
    if (gap.size() != delta.size()) {
      throw validation_error("momentum update: gap dimension differs");
    }
    if ((gap.array() < 1.0).any()) {
      throw validation_error("momentum update: gap coordinate below 1");
    }
    m = beta * m_prev + delta.cwiseQuotient(gap);
  } else {
    m = beta * m_prev + delta;
  }
  ensure_finite(m, "momentum update");
  return m;
}

ParamVector outer_iterate(const ParamVector& x_t0, double alpha,
                          const ParamVector& m, double phi, bool clip_enabled) {
  if (!(alpha > 0.0)) {
    throw validation_error("outer_iterate: alpha must be positive");
  }
  if (x_t0.size() != m.size()) {
    throw validation_error("outer_iterate: dimensions differ");
  }
  ParamVector x;
  if (clip_enabled) {
    x = x_t0 - alpha * clip_elementwise(m, phi);
  } else {
    x = x_t0 - alpha * m;
  }
  ensure_finite(x, "outer_iterate");
  return x;
}

RoundResult co2_round(std::vector<WorkerState>& workers,
                      std::vector<OuterState>& outer,
                      const std::vector<InnerTrace>& traces, int tau,
                      CollectiveEngine& engine, Clock& clock,
                      const Co2Hyper& hyper) {
  hyper.validate();
  const std::size_t g = workers.size();
  RoundResult res;

  // The reduce of x_{t,tau} starts now; its result is consumed next round.
  std::uint64_t launched = engine.launch_all_reduce(collect_params(workers), clock);

  if (outer.front().t == 0) {
    // Round 0: snapshot, keep x_{1,0} = x_{0,tau} worker-local, skip the
    // gap/momentum/outer machinery.
    for (std::size_t i = 0; i < g; ++i) {
      if (hyper.ghost_consistent) {
        // Averaged snapshots; computed once below.
        continue;
      }
      outer[i].prev_x0 = traces[i].x_start;
      outer[i].prev_x1 = traces[i].x_first;
    }
    if (hyper.ghost_consistent) {
      std::vector<ParamVector> starts, firsts;
      for (const InnerTrace& tr : traces) {
        starts.push_back(tr.x_start);
        firsts.push_back(tr.x_first);
      }
      ParamVector bar0 = average(starts);
      ParamVector bar1 = average(firsts);
      for (std::size_t i = 0; i < g; ++i) {
        outer[i].prev_x0 = bar0;
        outer[i].prev_x1 = bar1;
      }
    }
    for (std::size_t i = 0; i < g; ++i) {
      outer[i].pending = launched;
      outer[i].t = 1;
    }
    return res;
  }

  std::uint64_t prev = shared_pending(outer);
  // The poll result is recorded by the engine: a wait that stalls must have
  // polled false.
  engine.is_completed(prev, clock);
  ParamVector avg = engine.wait(prev, clock);
  res.stall_seconds = engine.info(prev).stall;
  res.consumed_average = avg;

  if (hyper.ghost_consistent) {
    std::vector<ParamVector> starts, firsts;
    for (const InnerTrace& tr : traces) {
      starts.push_back(tr.x_start);
      firsts.push_back(tr.x_first);
    }
    ParamVector bar0 = average(starts);
    ParamVector bar1 = average(firsts);
    ParamVector lam = staleness_gap(bar0, outer.front().prev_x0,
                                    outer.front().prev_x1, tau, hyper.epsilon);
    ParamVector delta = outer.front().prev_x0 - avg;
    ParamVector m = penalized_momentum_update(outer.front().momentum,
                                              hyper.beta, lam, delta,
                                              hyper.penalty);
    ParamVector next = outer_iterate(bar0, hyper.alpha, m, hyper.phi, hyper.clip);
    res.min_gap = lam.minCoeff();
    res.max_outer_step = (next - bar0).cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < g; ++i) {
      outer[i].momentum = m;
      outer[i].gap = lam;
      outer[i].prev_x0 = bar0;
      outer[i].prev_x1 = bar1;
      workers[i].params = next;
    }
  } else {
    for (std::size_t i = 0; i < g; ++i) {
      ParamVector lam = staleness_gap(traces[i].x_start, outer[i].prev_x0,
                                      outer[i].prev_x1, tau, hyper.epsilon);
      ParamVector delta = outer[i].prev_x0 - avg;
      ParamVector m = penalized_momentum_update(outer[i].momentum, hyper.beta,
                                                lam, delta, hyper.penalty);
      ParamVector next =
          outer_iterate(traces[i].x_start, hyper.alpha, m, hyper.phi, hyper.clip);
      res.min_gap = std::min(res.min_gap, lam.minCoeff());
      res.max_outer_step = std::max(
          res.max_outer_step, (next - traces[i].x_start).cwiseAbs().maxCoeff());
      outer[i].momentum = std::move(m);
      outer[i].gap = std::move(lam);
      outer[i].prev_x0 = traces[i].x_start;
      outer[i].prev_x1 = traces[i].x_first;
      workers[i].params = std::move(next);
    }
  }

  for (std::size_t i = 0; i < g; ++i) {
    outer[i].pending = launched;
    outer[i].t += 1;
  }
  res.outer_applied = true;
  return res;
}

RoundResult slowmo_round(std::vector<WorkerState>& workers,
                         std::vector<OuterState>& outer,
                         const std::vector<InnerTrace>& traces,
                         CollectiveEngine& engine, Clock& clock, double alpha,
                         double beta) {
  if (!(alpha > 0.0)) throw validation_error("slowmo: alpha must be positive");
  if (beta < 0.0 || beta >= 1.0) {
    throw validation_error("slowmo: beta must lie in [0, 1)");
  }
  RoundResult res;
  std::uint64_t h = engine.launch_all_reduce(collect_params(workers), clock);
  ParamVector avg = engine.wait(h, clock);  // blocking
  res.stall_seconds = engine.info(h).stall;
  res.consumed_average = avg;
  for (std::size_t i = 0; i < workers.size(); ++i) {
    ParamVector delta = traces[i].x_start - avg;
    outer[i].momentum = beta * outer[i].momentum + delta;
    ensure_finite(outer[i].momentum, "slowmo momentum");
    workers[i].params = traces[i].x_start - alpha * outer[i].momentum;
    ensure_finite(workers[i].params, "slowmo outer iterate");
    res.max_outer_step =
        std::max(res.max_outer_step,
                 (workers[i].params - traces[i].x_start).cwiseAbs().maxCoeff());
    outer[i].t += 1;
  }
  res.outer_applied = true;
  return res;
}

RoundResult local_sgd_round(std::vector<WorkerState>& workers,
                            std::vector<OuterState>& outer,
                            const std::vector<InnerTrace>& traces,
                            CollectiveEngine& engine, Clock& clock) {
  RoundResult res;
  std::uint64_t h = engine.launch_all_reduce(collect_params(workers), clock);
  ParamVector avg = engine.wait(h, clock);  // blocking
  res.stall_seconds = engine.info(h).stall;
  res.consumed_average = avg;
  for (std::size_t i = 0; i < workers.size(); ++i) {
    res.max_outer_step =
        std::max(res.max_outer_step,
                 (avg - traces[i].x_start).cwiseAbs().maxCoeff());
    workers[i].params = avg;
    outer[i].t += 1;
  }
  res.outer_applied = true;
  return res;
}

RoundResult overlap_local_sgd_round(std::vector<WorkerState>& workers,
                                    std::vector<OuterState>& outer,
                                    const std::vector<InnerTrace>& traces,
                                    CollectiveEngine& engine, Clock& clock) {
  const std::size_t g = workers.size();
  RoundResult res;

  // Consume last round's anchor average first.
  if (outer.front().pending) {
    std::uint64_t prev = shared_pending(outer);
    engine.is_completed(prev, clock);
    ParamVector avg = engine.wait(prev, clock);
    res.stall_seconds = engine.info(prev).stall;
    res.consumed_average = avg;
    for (std::size_t i = 0; i < g; ++i) {
      workers[i].params -= outer[i].anchor - avg;
      ensure_finite(workers[i].params, "overlap correction");
      outer[i].pending.reset();
    }
  }

  // Fresh anchors, then the overlapped reduce of them.
  std::vector<ParamVector> anchors;
  anchors.reserve(g);
  for (std::size_t i = 0; i < g; ++i) {
    outer[i].anchor = workers[i].params;
    anchors.push_back(outer[i].anchor);
  }
  std::uint64_t h = engine.launch_all_reduce(anchors, clock);
  if (engine.is_completed(h, clock)) {
    // Instant completion (zero-cost model): behave like local_sgd.
    ParamVector avg = engine.wait(h, clock);
    res.consumed_average = avg;
    for (std::size_t i = 0; i < g; ++i) {
      workers[i].params -= outer[i].anchor - avg;
      ensure_finite(workers[i].params, "overlap correction");
    }
  } else {
    for (std::size_t i = 0; i < g; ++i) {
      outer[i].pending = h;
    }
  }

  for (std::size_t i = 0; i < g; ++i) {
    res.max_outer_step =
        std::max(res.max_outer_step,
                 (workers[i].params - traces[i].x_end).cwiseAbs().maxCoeff());
    outer[i].t += 1;
  }
  res.outer_applied = true;
  return res;
}

RoundResult sync_sgd_round(std::vector<WorkerState>& workers,
                           const Problem& problem,
                           const std::vector<DataShard>& shards,
                           const InnerSchedule& schedule,
                           const InnerOptions& options, int tau, int t,
                           double t_comp, CollectiveEngine& engine,
                           Clock& clock, ParamVector* grad_sum_out) {
  if (tau < 1) throw validation_error("sync_sgd_round: tau must be >= 1");
  RoundResult res;
  ParamVector grad_sum = ParamVector::Zero(problem.dimension);
  for (int k = 0; k < tau; ++k) {
    double lr = lr_at(schedule, t, k);
    std::vector<ParamVector> grads;
    grads.reserve(workers.size());
    for (WorkerState& w : workers) {
      grads.push_back(stochastic_gradient(problem, shards[w.index], w.params,
                                          options.batch_size, w.rng)
                          .gradient);
    }
    clock.advance(t_comp);
    std::uint64_t h = engine.launch_all_reduce(grads, clock);
    ParamVector mean_grad = engine.wait(h, clock);  // blocking
    res.stall_seconds += engine.info(h).stall;
    for (WorkerState& w : workers) {
      w.params -= lr * mean_grad;
      ensure_finite(w.params, "sync sgd step");
    }
    grad_sum += mean_grad;
  }
  if (grad_sum_out) {
    *grad_sum_out = std::move(grad_sum);
  }
  return res;
}

ParamVector Simulation::average_params() const {
  return average(collect_params(workers_));
}

namespace {

// The cluster's worker count always follows the simulation's.
SimSetup normalize(SimSetup setup) {
  setup.cluster.workers = setup.workers;
  return setup;
}

}  // namespace

Simulation::Simulation(const Problem& problem, SimSetup setup)
    : problem_(&problem),
      setup_(normalize(std::move(setup))),
      engine_(setup_.cluster, setup_.comm_mode) {
  if (setup_.workers < 1) {
    throw validation_error("simulation: workers must be >= 1");
  }
  if (setup_.tau < 1) throw validation_error("simulation: tau must be >= 1");
  setup_.schedule.validate();
  setup_.hyper.validate();
  if (setup_.inner.batch_size < 1) {
    throw validation_error("simulation: batch_size must be >= 1");
  }

  if (setup_.explicit_shards) {
    if (static_cast<int>(setup_.explicit_shards->size()) != setup_.workers) {
      throw validation_error("simulation: explicit shard count != workers");
    }
    for (int i = 0; i < setup_.workers; ++i) {
      DataShard s;
      s.worker_index = i;
      s.rows = (*setup_.explicit_shards)[i];
      std::sort(s.rows.begin(), s.rows.end());
      for (int r : s.rows) {
        if (r < 0 || r >= problem.samples()) {
          throw validation_error("simulation: shard row out of range");
        }
      }
      if (s.rows.empty()) {
        throw validation_error("simulation: empty explicit shard");
      }
      s.seed = setup_.seed;
      shards_.push_back(std::move(s));
    }
  } else {
    shards_ = shard(problem, setup_.workers, setup_.seed, setup_.heterogeneity);
  }
  for (const DataShard& s : shards_) {
    if (setup_.inner.batch_size > static_cast<int>(s.rows.size())) {
      throw validation_error("simulation: batch_size exceeds a shard");
    }
  }

  ParamVector init = setup_.init_params
                         ? *setup_.init_params
                         : ParamVector::Zero(problem.dimension);
  if (init.size() != problem.dimension) {
    throw validation_error("simulation: init params dimension mismatch");
  }
  for (int i = 0; i < setup_.workers; ++i) {
    workers_.emplace_back(i, init, setup_.seed);
    OuterState st;
    st.momentum = ParamVector::Zero(problem.dimension);
    st.gap = ParamVector::Ones(problem.dimension);
    outer_.push_back(std::move(st));
  }
}

RoundRecord Simulation::step() {
  const int t = round_;
  RoundRecord rec;
  rec.t = t;

  if (setup_.kind == AlgorithmKind::sync_sgd) {
    ParamVector grad_sum;
    std::vector<ParamVector> starts = collect_params(workers_);
    RoundResult rr = sync_sgd_round(workers_, *problem_, shards_,
                                    setup_.schedule, setup_.inner, setup_.tau,
                                    t, setup_.cluster.t_comp, engine_, clock_,
                                    &grad_sum);
    rec.stall_seconds = rr.stall_seconds;
    rec.outer_applied = rr.outer_applied;
    rec.xbar_start = average(starts);
    rec.mean_grad_sum = std::move(grad_sum);
    rec.mean_batch_loss = 0.0;
  } else {
    std::vector<InnerTrace> traces;
    traces.reserve(workers_.size());
    for (WorkerState& w : workers_) {
      traces.push_back(run_inner_loop(w, *problem_, shards_[w.index],
                                      setup_.schedule, setup_.tau, t,
                                      setup_.inner));
    }
    clock_.advance(setup_.tau * setup_.cluster.t_comp);

    RoundResult rr;
    switch (setup_.kind) {
      case AlgorithmKind::co2:
        rr = co2_round(workers_, outer_, traces, setup_.tau, engine_, clock_,
                       setup_.hyper);
        break;
      case AlgorithmKind::slowmo:
        rr = slowmo_round(workers_, outer_, traces, engine_, clock_,
                          setup_.hyper.alpha, setup_.hyper.beta);
        break;
      case AlgorithmKind::local_sgd:
        rr = local_sgd_round(workers_, outer_, traces, engine_, clock_);
        break;
      case AlgorithmKind::overlap_local_sgd:
        rr = overlap_local_sgd_round(workers_, outer_, traces, engine_, clock_);
        break;
      case AlgorithmKind::sync_sgd:
        break;  // handled above
    }
    if (rr.outer_applied) {
      clock_.advance(setup_.cluster.t_outer);
    }
    rec.stall_seconds = rr.stall_seconds;
    rec.outer_applied = rr.outer_applied;
    rec.min_gap = rr.min_gap;
    rec.max_outer_step = rr.max_outer_step;
    rec.consumed_average = std::move(rr.consumed_average);

    std::vector<ParamVector> starts, grad_sums;
    starts.reserve(traces.size());
    grad_sums.reserve(traces.size());
    double batch_loss_total = 0.0;
    int batch_loss_count = 0;
    for (const InnerTrace& tr : traces) {
      starts.push_back(tr.x_start);
      ParamVector sum = ParamVector::Zero(problem_->dimension);
      for (const ParamVector& g : tr.grads) {
        sum += g;
      }
      grad_sums.push_back(std::move(sum));
      for (double bl : tr.batch_losses) {
        batch_loss_total += bl;
        ++batch_loss_count;
      }
    }
    rec.xbar_start = average(starts);
    rec.mean_grad_sum = average(grad_sums);
    rec.mean_batch_loss =
        batch_loss_count > 0 ? batch_loss_total / batch_loss_count : 0.0;
    if (setup_.capture_traces) {
      rec.traces = std::move(traces);
    }
  }

  rec.xbar_end = average_params();
  double div = 0.0;
  for (const WorkerState& w : workers_) {
    div = std::max(div, l2_norm(w.params - rec.xbar_end));
  }
  rec.divergence = div;
  rec.sim_time = clock_.now;
  ++round_;
  return rec;
}

}  // namespace co2sim
