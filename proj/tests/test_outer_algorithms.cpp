#include <doctest.h>

#include "co2sim/errors.hpp"
#include "co2sim/harness.hpp"
#include "co2sim/outer_algorithms.hpp"
#include "co2sim/problems.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

using namespace co2sim;

namespace {

ParamVector vec(std::initializer_list<double> xs) {
  ParamVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Two-coordinate least squares whose every iterate stays inside [1, 2).
// Within one binade the subtractions a - b and a - (a - b) are exact
// (Sterbenz), which upgrades several algebraic equivalences to bit equality.
Problem band_problem() {
  Eigen::MatrixXd f(4, 2);
  f << 1.0, 0.0,
       1.0, 0.0,
       0.0, 1.0,
       0.0, 1.0;
  Eigen::VectorXd t(4);
  t << 1.25, 1.5, 1.5, 1.75;
  return make_quadratic_from_data(f, t);
}

SimSetup band_setup(AlgorithmKind kind, int tau) {
  SimSetup s;
  s.kind = kind;
  s.workers = 2;
  s.tau = tau;
  s.schedule.kind = ScheduleKind::constant;
  s.schedule.base_lr = 0.25;
  s.schedule.total_rounds = 64;
  s.inner.batch_size = 2;
  s.seed = 7;
  s.explicit_shards = std::vector<std::vector<int>>{{0, 2}, {1, 3}};
  s.init_params = vec({1.5, 1.5});
  s.cluster.measured_override = 0.0;
  return s;
}

SimSetup general_setup(AlgorithmKind kind, int workers, int tau,
                       int batch_size, double lr, std::uint64_t seed) {
  SimSetup s;
  s.kind = kind;
  s.workers = workers;
  s.tau = tau;
  s.schedule.kind = ScheduleKind::constant;
  s.schedule.base_lr = lr;
  s.schedule.total_rounds = 256;
  s.inner.batch_size = batch_size;
  s.seed = seed;
  s.cluster.measured_override = 0.0;
  return s;
}

double sup_diff(const ParamVector& a, const ParamVector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

bool replay_fixture(const std::string& file) {
  std::ostringstream sink;
  bool ok = run_fixture_check(std::string(CO2SIM_FIXTURE_DIR) + "/" + file,
                              sink);
  if (!ok) {
    MESSAGE(sink.str());
  }
  return ok;
}

}  // namespace

TEST_CASE("staleness gap compares displacement against the first inner step") {
  // tau = 2: coordinate 0 moved 0.6 against a first-step scale of 2*0.2,
  // coordinate 1 moved 0.1 against 2*0.1.
  ParamVector x_t0 = vec({1.6, 0.3});
  ParamVector prev_x0 = vec({1.0, 0.2});
  ParamVector prev_x1 = vec({1.2, 0.3});
  ParamVector gap = staleness_gap(x_t0, prev_x0, prev_x1, 2, 1e-12);
  CHECK(gap(0) == doctest::Approx(0.6 / 0.4 + 1.0).epsilon(1e-15));
  CHECK(gap(1) == doctest::Approx(0.1 / 0.2 + 1.0).epsilon(1e-15));
}

TEST_CASE("a motionless coordinate falls back to the epsilon floor") {
  ParamVector x_t0 = vec({2.0, 1.0});
  ParamVector prev_x0 = vec({1.0, 1.0});
  ParamVector prev_x1 = vec({1.0, 1.0});  // first step went nowhere
  ParamVector gap = staleness_gap(x_t0, prev_x0, prev_x1, 4, 0.5);
  CHECK(gap(0) == 1.0 / 0.5 + 1.0);  // denominator floored at epsilon
  CHECK(gap(1) == 1.0);              // no displacement either: 0/eps + 1
}

TEST_CASE("the gap never dips below one") {
  RngStream rng(3, 0);
  for (int trial = 0; trial < 200; ++trial) {
    ParamVector a(8), b(8), c(8);
    for (int i = 0; i < 8; ++i) {
      a(i) = rng.next_gaussian();
      b(i) = rng.next_gaussian();
      c(i) = rng.next_gaussian();
    }
    ParamVector gap = staleness_gap(a, b, c, 3, 1e-12);
    for (int i = 0; i < 8; ++i) {
      CHECK(gap(i) >= 1.0);
      CHECK(std::isfinite(gap(i)));
    }
  }
}

TEST_CASE("penalized momentum divides the displacement by the gap") {
  ParamVector m_prev = vec({1.0, -2.0});
  ParamVector gap = vec({2.0, 1.0});
  ParamVector delta = vec({0.5, 0.3});
  ParamVector m = penalized_momentum_update(m_prev, 0.5, gap, delta, true);
  CHECK(m(0) == 0.5 * 1.0 + 0.5 / 2.0);
  CHECK(m(1) == 0.5 * -2.0 + 0.3);

  ParamVector raw = penalized_momentum_update(m_prev, 0.5, gap, delta, false);
  CHECK(raw(0) == 1.0);
  CHECK(raw(1) == -0.7);

  ParamVector bad_gap = vec({0.5, 1.0});
  CHECK_THROWS_AS(penalized_momentum_update(m_prev, 0.5, bad_gap, delta, true),
                  validation_error);
}

TEST_CASE("outer_iterate applies the clipped momentum step") {
  ParamVector x = vec({1.0, -1.0, 0.0});
  ParamVector m = vec({4.0, -0.25, -9.0});
  ParamVector next = outer_iterate(x, 0.5, m, 1.0, true);
  CHECK(next(0) == 1.0 - 0.5 * 1.0);
  CHECK(next(1) == -1.0 + 0.5 * 0.25);
  CHECK(next(2) == 0.5);

  ParamVector raw = outer_iterate(x, 0.5, m, 1.0, false);
  CHECK(raw(0) == -1.0);
  CHECK(raw(2) == 4.5);
}

TEST_CASE("hyperparameter validation") {
  Co2Hyper h;
  h.validate();
  h.alpha = 0.0;
  CHECK_THROWS_AS(h.validate(), validation_error);
  h.alpha = 1.0;
  h.beta = 1.0;
  CHECK_THROWS_AS(h.validate(), validation_error);
  h.beta = -0.1;
  CHECK_THROWS_AS(h.validate(), validation_error);
  h.beta = 0.5;
  h.phi = 0.0;
  CHECK_THROWS_AS(h.validate(), validation_error);
  h.phi = 1.0;
  h.epsilon = 0.0;
  CHECK_THROWS_AS(h.validate(), validation_error);
}

TEST_CASE("hand-written traces replay bit for bit") {
  CHECK(replay_fixture("co2_dim1.json"));
  CHECK(replay_fixture("slowmo_dim1.json"));
  CHECK(replay_fixture("local_sgd_dim1.json"));
  CHECK(replay_fixture("overlap_dim1.json"));
  CHECK(replay_fixture("sync_sgd_dim1.json"));
}

TEST_CASE("round zero only snapshots; the first outer update happens at round one") {
  Problem p = band_problem();
  SimSetup s = band_setup(AlgorithmKind::co2, 3);
  s.capture_traces = true;
  Simulation sim(p, s);

  RoundRecord r0 = sim.step();
  CHECK_FALSE(r0.outer_applied);
  CHECK(r0.consumed_average.size() == 0);
  for (int w = 0; w < 2; ++w) {
    // x_{1,0} = x_{0,tau}: the average is launched but not applied.
    CHECK(sim.workers()[w].params == r0.traces[w].x_end);
  }

  RoundRecord r1 = sim.step();
  CHECK(r1.outer_applied);
  REQUIRE(r1.consumed_average.size() == 2);
  // The consumed reduce is exactly the average of the previous round's ends.
  std::vector<ParamVector> prev_ends = {r0.traces[0].x_end, r0.traces[1].x_end};
  ParamVector expect = average(prev_ends);
  CHECK(r1.consumed_average(0) == expect(0));
  CHECK(r1.consumed_average(1) == expect(1));
}

TEST_CASE("the consumed average is always one round stale") {
  Problem p = make_quadratic(6, 48, 8.0, 0.2, 21);
  SimSetup s = general_setup(AlgorithmKind::co2, 3, 4, 8, 0.05, 9);
  s.capture_traces = true;
  Simulation sim(p, s);

  std::vector<ParamVector> prev_ends;
  for (int t = 0; t < 8; ++t) {
    RoundRecord rec = sim.step();
    std::vector<ParamVector> ends;
    for (const InnerTrace& tr : rec.traces) ends.push_back(tr.x_end);
    if (t == 0) {
      CHECK(rec.consumed_average.size() == 0);
    } else {
      ParamVector expect = average(prev_ends);
      REQUIRE(rec.consumed_average.size() == expect.size());
      for (Eigen::Index i = 0; i < expect.size(); ++i) {
        CHECK(rec.consumed_average(i) == expect(i));
      }
    }
    prev_ends = std::move(ends);
  }
}

TEST_CASE("unit outer rate without momentum reduces slowmo to local averaging") {
  // params = x_t0 - 1 * (x_t0 - avg) collapses to avg exactly while the
  // trajectory stays inside one binade.
  Problem p = band_problem();
  SimSetup slowmo = band_setup(AlgorithmKind::slowmo, 2);
  slowmo.hyper.alpha = 1.0;
  slowmo.hyper.beta = 0.0;
  SimSetup local = band_setup(AlgorithmKind::local_sgd, 2);

  Simulation a(p, slowmo);
  Simulation b(p, local);
  for (int t = 0; t < 6; ++t) {
    a.step();
    b.step();
    for (int w = 0; w < 2; ++w) {
      const ParamVector& xa = a.workers()[w].params;
      const ParamVector& xb = b.workers()[w].params;
      for (int i = 0; i < 2; ++i) {
        CHECK(xa(i) == xb(i));
        CHECK(xa(i) >= 1.0);  // precondition for the bit equality
        CHECK(xa(i) < 2.0);
      }
    }
  }
}

TEST_CASE("zero-delay anchor correction coincides with local averaging") {
  Problem p = band_problem();
  SimSetup overlap = band_setup(AlgorithmKind::overlap_local_sgd, 2);
  SimSetup local = band_setup(AlgorithmKind::local_sgd, 2);

  Simulation a(p, overlap);
  Simulation b(p, local);
  for (int t = 0; t < 6; ++t) {
    a.step();
    b.step();
    for (int w = 0; w < 2; ++w) {
      CHECK(a.workers()[w].params == b.workers()[w].params);
    }
  }
}

TEST_CASE("zero-delay anchor correction tracks local averaging in general") {
  // Outside the single-binade regime the collapse x - (x - avg) = avg only
  // holds to rounding, so the comparison carries a tolerance.
  Problem p = make_quadratic(5, 40, 6.0, 0.3, 14);
  SimSetup overlap = general_setup(AlgorithmKind::overlap_local_sgd, 4, 3, 10, 0.05, 3);
  SimSetup local = general_setup(AlgorithmKind::local_sgd, 4, 3, 10, 0.05, 3);

  Simulation a(p, overlap);
  Simulation b(p, local);
  for (int t = 0; t < 6; ++t) {
    a.step();
    b.step();
    for (int w = 0; w < 4; ++w) {
      CHECK(sup_diff(a.workers()[w].params, b.workers()[w].params) < 1e-13);
    }
  }
}

TEST_CASE("a single worker degenerates to the serial inner loop") {
  Problem p = make_quadratic(4, 24, 4.0, 0.2, 17);
  for (AlgorithmKind kind : {AlgorithmKind::local_sgd,
                             AlgorithmKind::overlap_local_sgd,
                             AlgorithmKind::sync_sgd}) {
    SimSetup s = general_setup(kind, 1, 3, 4, 0.1, 5);
    Simulation sim(p, s);
    for (int t = 0; t < 4; ++t) sim.step();

    // Serial reference: the same inner loop, no collective at all.
    std::vector<DataShard> shards = shard(p, 1, s.seed);
    WorkerState serial(0, ParamVector::Zero(4), s.seed);
    for (int t = 0; t < 4; ++t) {
      if (kind == AlgorithmKind::sync_sgd) {
        for (int k = 0; k < 3; ++k) {
          GradSample g = stochastic_gradient(p, shards[0], serial.params,
                                             s.inner.batch_size, serial.rng);
          serial.params -= lr_at(s.schedule, t, k) * g.gradient;
        }
      } else {
        (void)run_inner_loop(serial, p, shards[0], s.schedule, 3, t, s.inner);
      }
    }
    CHECK(sim.workers()[0].params == serial.params);
  }
}

TEST_CASE("the per-coordinate gap stays at least one across a real run") {
  Problem p = make_quadratic(8, 64, 16.0, 0.4, 30);
  SimSetup s = general_setup(AlgorithmKind::co2, 4, 6, 8, 0.05, 11);
  Simulation sim(p, s);
  for (int t = 0; t < 20; ++t) {
    RoundRecord rec = sim.step();
    if (rec.outer_applied) {
      CHECK(rec.min_gap >= 1.0);
      CHECK(std::isfinite(rec.min_gap));
      for (const OuterState& o : sim.outer_states()) {
        CHECK(o.gap.minCoeff() >= 1.0);
      }
    }
  }
}

TEST_CASE("clipping bounds every outer displacement by alpha phi") {
  Problem p = make_quadratic(6, 48, 10.0, 0.3, 33);
  SimSetup s = general_setup(AlgorithmKind::co2, 3, 4, 8, 0.2, 13);
  s.hyper.alpha = 0.5;
  s.hyper.phi = 0.25;
  s.capture_traces = true;
  Simulation sim(p, s);

  ParamVector prev_start;
  const double bound = 0.5 * 0.25 * (1.0 + 1e-15);
  for (int t = 0; t < 12; ++t) {
    RoundRecord rec = sim.step();
    if (rec.outer_applied) {
      CHECK(rec.max_outer_step <= bound);
      // The new round start differs from the old one by alpha * clip(m).
      if (t >= 2) {
        CHECK(sup_diff(rec.traces[0].x_start, prev_start) <= bound);
      }
    }
    prev_start = rec.traces[0].x_start;
  }
}

TEST_CASE("ghost-consistent mode keeps workers identical after each outer update") {
  Problem p = make_quadratic(6, 48, 8.0, 0.2, 40);
  SimSetup s = general_setup(AlgorithmKind::co2, 4, 3, 12, 0.1, 19);
  s.hyper.ghost_consistent = true;
  Simulation sim(p, s);

  RoundRecord r0 = sim.step();
  CHECK_FALSE(r0.outer_applied);
  double first_loss = loss(p, sim.average_params());
  for (int t = 1; t < 10; ++t) {
    RoundRecord rec = sim.step();
    CHECK(rec.outer_applied);
    for (int w = 1; w < 4; ++w) {
      CHECK(sim.workers()[w].params == sim.workers()[0].params);
    }
    CHECK(rec.divergence == 0.0);
  }
  CHECK(loss(p, sim.average_params()) < first_loss);
}

TEST_CASE("worker-local mode lets workers disagree between reduces") {
  Problem p = make_quadratic(6, 48, 8.0, 0.2, 40);
  SimSetup s = general_setup(AlgorithmKind::co2, 4, 3, 12, 0.1, 19);
  Simulation sim(p, s);
  sim.step();
  bool ever_disagreed = false;
  for (int t = 1; t < 6; ++t) {
    RoundRecord rec = sim.step();
    if (rec.divergence > 0.0) ever_disagreed = true;
  }
  CHECK(ever_disagreed);
}

TEST_CASE("trajectories never depend on the modeled timings") {
  Problem p = make_quadratic(5, 40, 6.0, 0.3, 50);
  for (AlgorithmKind kind : {AlgorithmKind::co2, AlgorithmKind::slowmo,
                             AlgorithmKind::local_sgd,
                             AlgorithmKind::sync_sgd}) {
    SimSetup fast = general_setup(kind, 3, 2, 6, 0.05, 23);
    SimSetup slow = fast;
    slow.cluster.measured_override = 50.0;
    slow.cluster.t_comp = 7.0;
    slow.cluster.t_outer = 3.0;

    Simulation a(p, fast);
    Simulation b(p, slow);
    double last_time_a = 0.0, last_time_b = 0.0;
    for (int t = 0; t < 5; ++t) {
      RoundRecord ra = a.step();
      RoundRecord rb = b.step();
      for (int w = 0; w < 3; ++w) {
        CHECK(a.workers()[w].params == b.workers()[w].params);
      }
      last_time_a = ra.sim_time;
      last_time_b = rb.sim_time;
    }
    CHECK(last_time_b > last_time_a);  // only the clock moved differently
  }
}

TEST_CASE("anchor correction timing does change its trajectory") {
  // The same algorithm consumes the reduce in-round when communication is
  // free and one round late when it is slow; the iterates must differ.
  Problem p = make_quadratic(5, 40, 6.0, 0.3, 50);
  SimSetup fast = general_setup(AlgorithmKind::overlap_local_sgd, 3, 2, 6, 0.05, 23);
  SimSetup slow = fast;
  slow.cluster.t_comp = 1.0;
  slow.cluster.measured_override = 50.0;

  Simulation a(p, fast);
  Simulation b(p, slow);
  bool differed = false;
  for (int t = 0; t < 5; ++t) {
    a.step();
    b.step();
    for (int w = 0; w < 3; ++w) {
      if (a.workers()[w].params != b.workers()[w].params) differed = true;
    }
  }
  CHECK(differed);
}

TEST_CASE("synchronous workers stay bit-identical through every round") {
  Problem p = make_quadratic(5, 40, 6.0, 0.3, 60);
  SimSetup s = general_setup(AlgorithmKind::sync_sgd, 4, 3, 5, 0.1, 2);
  Simulation sim(p, s);
  for (int t = 0; t < 6; ++t) {
    RoundRecord rec = sim.step();
    CHECK(rec.divergence == 0.0);
    for (int w = 1; w < 4; ++w) {
      CHECK(sim.workers()[w].params == sim.workers()[0].params);
    }
  }
}

TEST_CASE("threaded reduction reproduces the simulated trajectory bit for bit") {
  Problem p = make_quadratic(6, 48, 8.0, 0.2, 70);
  SimSetup sim_mode = general_setup(AlgorithmKind::co2, 4, 3, 8, 0.08, 31);
  SimSetup thr_mode = sim_mode;
  thr_mode.comm_mode = CommMode::threaded;

  Simulation a(p, sim_mode);
  Simulation b(p, thr_mode);
  for (int t = 0; t < 8; ++t) {
    a.step();
    b.step();
    for (int w = 0; w < 4; ++w) {
      CHECK(a.workers()[w].params == b.workers()[w].params);
    }
  }
}

TEST_CASE("local sgd with one inner step tracks synchronous sgd") {
  // Identical batches, two arithmetic routes: average the post-step iterates
  // versus step along the averaged gradient.  Algebraically equal, in floats
  // equal only to rounding, so the comparison is a tight tolerance, not bit
  // equality.
  Problem p = make_quadratic(6, 48, 8.0, 0.2, 80);
  SimSetup local = general_setup(AlgorithmKind::local_sgd, 4, 1, 4, 0.1, 41);
  SimSetup sync = general_setup(AlgorithmKind::sync_sgd, 4, 1, 4, 0.1, 41);

  Simulation a(p, local);
  Simulation b(p, sync);
  for (int t = 0; t < 8; ++t) {
    a.step();
    b.step();
    CHECK(sup_diff(a.average_params(), b.average_params()) < 1e-12);
  }
}
