#include <doctest.h>

#include "co2sim/errors.hpp"
#include "co2sim/inner_loop.hpp"
#include "co2sim/problems.hpp"

#include <cmath>
#include <vector>

using namespace co2sim;

namespace {

// g(x) = x - 1 on every batch: two rows with a = 1 and targets 0, 2 under a
// full-shard batch.
Problem scalar_problem() {
  Eigen::MatrixXd f(2, 1);
  f << 1.0, 1.0;
  Eigen::VectorXd t(2);
  t << 0.0, 2.0;
  return make_quadratic_from_data(f, t);
}

DataShard whole_shard() {
  DataShard s;
  s.worker_index = 0;
  s.rows = {0, 1};
  return s;
}

InnerSchedule constant_schedule(double lr, int total) {
  InnerSchedule s;
  s.kind = ScheduleKind::constant;
  s.base_lr = lr;
  s.total_rounds = total;
  return s;
}

}  // namespace

TEST_CASE("lr_at matches the closed forms") {
  InnerSchedule c = constant_schedule(0.25, 10);
  c.validate();
  CHECK(lr_at(c, 0, 0) == 0.25);
  CHECK(lr_at(c, 9, 3) == 0.25);

  InnerSchedule cos;
  cos.kind = ScheduleKind::cosine;
  cos.base_lr = 1.0;
  cos.total_rounds = 10;
  cos.validate();
  CHECK(lr_at(cos, 0, 0) == 1.0);
  CHECK(lr_at(cos, 5, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(lr_at(cos, 9, 0) == doctest::Approx(0.5 * (1.0 + std::cos(M_PI * 0.9))));
  for (int t = 0; t < 10; ++t) {
    CHECK(lr_at(cos, t, 0) > 0.0);
    if (t > 0) CHECK(lr_at(cos, t, 0) < lr_at(cos, t - 1, 0));
  }

  InnerSchedule w;
  w.kind = ScheduleKind::warmup_cosine;
  w.base_lr = 2.0;
  w.total_rounds = 10;
  w.warmup_rounds = 4;
  w.validate();
  CHECK(lr_at(w, 0, 0) == 0.5);   // 2 * 1/4
  CHECK(lr_at(w, 1, 0) == 1.0);
  CHECK(lr_at(w, 3, 0) == 2.0);   // ramp reaches base at the last warmup round
  CHECK(lr_at(w, 4, 0) == 2.0);   // cosine starts at full value
  CHECK(lr_at(w, 9, 0) > 0.0);
  CHECK(lr_at(w, 9, 0) < 0.5);

  CHECK_THROWS_AS(lr_at(c, -1, 0), validation_error);
  CHECK_THROWS_AS(lr_at(c, 10, 0), validation_error);
}

TEST_CASE("schedule validation rejects malformed configurations") {
  InnerSchedule s = constant_schedule(0.0, 10);
  CHECK_THROWS_AS(s.validate(), validation_error);
  s.base_lr = -1.0;
  CHECK_THROWS_AS(s.validate(), validation_error);
  s.base_lr = 0.1;
  s.total_rounds = 0;
  CHECK_THROWS_AS(s.validate(), validation_error);
  s.total_rounds = 10;
  s.kind = ScheduleKind::warmup_cosine;
  s.warmup_rounds = 0;
  CHECK_THROWS_AS(s.validate(), validation_error);
  s.warmup_rounds = 10;
  CHECK_THROWS_AS(s.validate(), validation_error);
  s.warmup_rounds = 3;
  s.validate();
}

TEST_CASE("five deterministic steps match a hand-rolled scalar loop exactly") {
  Problem p = scalar_problem();
  DataShard s = whole_shard();
  InnerSchedule sched = constant_schedule(0.25, 4);
  InnerOptions opts;
  opts.batch_size = 2;

  ParamVector init(1);
  init << 3.0;
  WorkerState worker(0, init, 7);
  InnerTrace trace = run_inner_loop(worker, p, s, sched, 5, 0, opts);

  double x = 3.0;
  std::vector<double> expected_grads;
  for (int k = 0; k < 5; ++k) {
    double g = x - 1.0;
    expected_grads.push_back(g);
    x = x - 0.25 * g;
  }
  CHECK(trace.x_start(0) == 3.0);
  CHECK(trace.x_first(0) == 2.5);
  CHECK(trace.x_end(0) == x);
  CHECK(worker.params(0) == x);
  REQUIRE(trace.grads.size() == 5);
  REQUIRE(trace.batch_losses.size() == 5);
  CHECK(trace.steps == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(trace.grads[k](0) == expected_grads[k]);
  }
}

TEST_CASE("the trace telescopes: x_end = x_start - lr * sum of gradients") {
  Problem p = make_quadratic(6, 48, 5.0, 0.2, 4);
  std::vector<DataShard> shards = shard(p, 2, 9);
  InnerSchedule sched = constant_schedule(0.05, 3);
  InnerOptions opts;
  opts.batch_size = 8;

  ParamVector init = ParamVector::Constant(6, 0.5);
  WorkerState worker(1, init, 13);
  InnerTrace trace = run_inner_loop(worker, p, shards[1], sched, 10, 1, opts);

  ParamVector sum = ParamVector::Zero(6);
  for (const ParamVector& g : trace.grads) sum += g;
  ParamVector reconstructed = trace.x_start - 0.05 * sum;
  CHECK((reconstructed - trace.x_end).norm() < 1e-13);
}

TEST_CASE("a single step makes x_first and x_end coincide") {
  Problem p = scalar_problem();
  DataShard s = whole_shard();
  InnerSchedule sched = constant_schedule(0.25, 1);
  InnerOptions opts;
  opts.batch_size = 2;
  ParamVector init(1);
  init << 2.0;
  WorkerState worker(0, init, 7);
  InnerTrace trace = run_inner_loop(worker, p, s, sched, 1, 0, opts);
  CHECK(trace.x_first(0) == trace.x_end(0));
  CHECK(trace.x_first(0) == 1.75);
}

TEST_CASE("stochastic trajectories replay exactly under the same worker key") {
  Problem p = make_quadratic(5, 40, 4.0, 0.3, 10);
  std::vector<DataShard> shards = shard(p, 2, 3);
  InnerSchedule sched = constant_schedule(0.1, 2);
  InnerOptions opts;
  opts.batch_size = 4;

  ParamVector init = ParamVector::Zero(5);
  WorkerState a(0, init, 55);
  WorkerState b(0, init, 55);
  InnerTrace ta = run_inner_loop(a, p, shards[0], sched, 6, 0, opts);
  InnerTrace tb = run_inner_loop(b, p, shards[0], sched, 6, 0, opts);
  CHECK(ta.x_end == tb.x_end);
  for (std::size_t k = 0; k < ta.grads.size(); ++k) {
    CHECK(ta.grads[k] == tb.grads[k]);
  }

  // A different worker index draws different batches.
  WorkerState c(1, init, 55);
  InnerTrace tc = run_inner_loop(c, p, shards[0], sched, 6, 0, opts);
  CHECK(ta.x_end != tc.x_end);
}

TEST_CASE("heavy-ball inner momentum matches a hand-rolled velocity loop") {
  Problem p = scalar_problem();
  DataShard s = whole_shard();
  InnerSchedule sched = constant_schedule(0.25, 1);
  InnerOptions opts;
  opts.batch_size = 2;
  opts.momentum = 0.5;

  ParamVector init(1);
  init << 3.0;
  WorkerState worker(0, init, 7);
  InnerTrace trace = run_inner_loop(worker, p, s, sched, 4, 0, opts);

  double x = 3.0, v = 0.0;
  for (int k = 0; k < 4; ++k) {
    double g = x - 1.0;
    v = 0.5 * v + g;
    x = x - 0.25 * v;
  }
  CHECK(trace.x_end(0) == x);

  InnerOptions bad = opts;
  bad.momentum = 1.0;
  WorkerState w2(0, init, 7);
  CHECK_THROWS_AS(run_inner_loop(w2, p, s, sched, 2, 0, bad), validation_error);
}

TEST_CASE("tau must be positive") {
  Problem p = scalar_problem();
  DataShard s = whole_shard();
  InnerSchedule sched = constant_schedule(0.25, 1);
  InnerOptions opts;
  opts.batch_size = 2;
  ParamVector init(1);
  init << 1.0;
  WorkerState worker(0, init, 7);
  CHECK_THROWS_AS(run_inner_loop(worker, p, s, sched, 0, 0, opts),
                  validation_error);
}
