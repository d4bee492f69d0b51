#include "co2sim/harness.hpp"

#include "co2sim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace co2sim {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SeedRunResult run_one_seed(const RunConfig& cfg, std::uint64_t seed) {
  Problem problem = build_problem(cfg, seed);
  Simulation sim(problem, build_setup(cfg, seed, problem));

  SeedRunResult result;
  result.seed = seed;
  double samples_per_round = static_cast<double>(cfg.inner.tau) *
                             cfg.run.workers * cfg.inner.batch_size;
  try {
    for (int t = 0; t < cfg.run.rounds; ++t) {
      RoundRecord rec = sim.step();
      RoundMetrics m;
      m.round = t;
      m.sim_time = rec.sim_time;
      m.train_loss = loss(problem, rec.xbar_end);
      m.grad_sq_norm = full_gradient(problem, rec.xbar_end).squaredNorm();
      m.divergence = rec.divergence;
      m.stall_seconds = rec.stall_seconds;
      double processed = samples_per_round * (t + 1);
      m.throughput = rec.sim_time > 0.0 ? processed / rec.sim_time : 0.0;
      result.metrics.push_back(m);
    }
    result.final_loss = result.metrics.back().train_loss;
    result.final_grad_sq = result.metrics.back().grad_sq_norm;
    result.final_params = sim.average_params();
  } catch (const numeric_error&) {
    result.diverged = true;
    result.final_loss = kInf;
    result.final_grad_sq = kInf;
  }
  result.events = sim.engine().events();
  result.wall_time = sim.clock().now;
  result.total_stall = sim.engine().total_stall();
  double processed = samples_per_round * result.metrics.size();
  result.throughput =
      result.wall_time > 0.0 ? processed / result.wall_time : 0.0;
  return result;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;
  for (int r = 0; r < cfg.run.repeats; ++r) {
    result.seeds.push_back(run_one_seed(cfg, cfg.run.seed + r));
  }
  double sum = 0.0;
  for (const SeedRunResult& s : result.seeds) {
    result.any_diverged = result.any_diverged || s.diverged;
    sum += s.final_loss;
  }
  int n = static_cast<int>(result.seeds.size());
  result.mean_final_loss = sum / n;
  double var = 0.0;
  if (std::isfinite(result.mean_final_loss)) {
    for (const SeedRunResult& s : result.seeds) {
      double d = s.final_loss - result.mean_final_loss;
      var += d * d;
    }
    result.std_final_loss = std::sqrt(var / n);
  } else {
    result.std_final_loss = kInf;
  }
  return result;
}

json summary_json(const ExperimentResult& result) {
  const RunConfig& cfg = result.config;
  json seeds = json::array();
  json losses = json::array();
  json grads = json::array();
  json walls = json::array();
  json stalls = json::array();
  json thpts = json::array();
  json diverged = json::array();
  for (const SeedRunResult& s : result.seeds) {
    seeds.push_back(s.seed);
    losses.push_back(s.final_loss);
    grads.push_back(s.final_grad_sq);
    walls.push_back(s.wall_time);
    stalls.push_back(s.total_stall);
    thpts.push_back(s.throughput);
    diverged.push_back(s.diverged);
  }
  return json{{"schema", "co2sim summary v1"},
              {"algorithm", to_string(cfg.algorithm.kind)},
              {"problem", to_string(cfg.problem.kind)},
              {"workers", cfg.run.workers},
              {"tau", cfg.inner.tau},
              {"rounds", cfg.run.rounds},
              {"repeats", cfg.run.repeats},
              {"seeds", seeds},
              {"final_train_loss", losses},
              {"final_grad_sq_norm", grads},
              {"mean_final_train_loss", result.mean_final_loss},
              {"std_final_train_loss", result.std_final_loss},
              {"wall_time", walls},
              {"total_stall", stalls},
              {"throughput", thpts},
              {"diverged", diverged}};
}

void write_experiment_outputs(const ExperimentResult& result,
                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (const SeedRunResult& s : result.seeds) {
    fs::path dir = fs::path(out_dir) / ("seed_" + std::to_string(s.seed));
    fs::create_directories(dir);

    std::ofstream csv(dir / "metrics.csv");
    if (!csv) throw validation_error("cannot write metrics.csv");
    csv << "# co2sim metrics v1\n";
    csv << "round,sim_time,train_loss,grad_sq_norm,divergence,stall_seconds,"
           "throughput\n";
    for (const RoundMetrics& m : s.metrics) {
      csv << m.round << ',' << fmt17(m.sim_time) << ',' << fmt17(m.train_loss)
          << ',' << fmt17(m.grad_sq_norm) << ',' << fmt17(m.divergence) << ','
          << fmt17(m.stall_seconds) << ',' << fmt17(m.throughput) << '\n';
    }

    std::ofstream ev(dir / "events.jsonl");
    if (!ev) throw validation_error("cannot write events.jsonl");
    for (const ReduceEvent& e : s.events) {
      ev << json{{"event", e.event},
                 {"handle_id", e.handle_id},
                 {"t_sim", e.t_sim},
                 {"stall", e.stall}}
                .dump()
         << '\n';
    }
  }
  std::ofstream sum(fs::path(out_dir) / "summary.json");
  if (!sum) throw validation_error("cannot write summary.json");
  sum << summary_json(result).dump(2) << '\n';
}

AblationResult run_ablation(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm.kind != AlgorithmKind::co2) {
    throw validation_error("ablation requires algorithm.kind == co2");
  }
  struct Variant {
    const char* name;
    bool penalty;
    bool clip;
  };
  const Variant variants[] = {{"full", true, true},
                              {"no_penalty", false, true},
                              {"no_clip", true, false}};
  AblationResult result;
  double sums[3] = {0.0, 0.0, 0.0};
  for (int v = 0; v < 3; ++v) {
    RunConfig variant_cfg = cfg;
    variant_cfg.algorithm.penalty = variants[v].penalty;
    variant_cfg.algorithm.clip = variants[v].clip;
    for (int r = 0; r < cfg.run.repeats; ++r) {
      std::uint64_t seed = cfg.run.seed + r;
      SeedRunResult run = run_one_seed(variant_cfg, seed);
      AblationRow row;
      row.variant = variants[v].name;
      row.seed = seed;
      row.final_loss = run.final_loss;
      row.final_grad_sq = run.final_grad_sq;
      row.diverged = run.diverged;
      sums[v] += row.final_loss;
      result.rows.push_back(std::move(row));
    }
  }
  result.mean_full = sums[0] / cfg.run.repeats;
  result.mean_no_penalty = sums[1] / cfg.run.repeats;
  result.mean_no_clip = sums[2] / cfg.run.repeats;
  return result;
}

void write_ablation_csv(const AblationResult& result, const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw validation_error("cannot write " + path);
  csv << "# co2sim ablation v1\n";
  csv << "variant,seed,final_loss,final_grad_sq_norm,diverged\n";
  for (const AblationRow& r : result.rows) {
    csv << r.variant << ',' << r.seed << ',' << fmt17(r.final_loss) << ','
        << fmt17(r.final_grad_sq) << ',' << (r.diverged ? 1 : 0) << '\n';
  }
}

std::vector<ScalingRow> run_scaling_sweep(const RunConfig& cfg) {
  cfg.validate();
  std::vector<ScalingRow> rows;
  for (int tau : cfg.sweep.tau_list) {
    double first_throughput = 0.0;
    int first_workers = 0;
    for (int g : cfg.sweep.workers_list) {
      ClusterSpec spec;
      spec.workers = g;
      spec.gpus_per_node = cfg.cluster.gpus_per_node;
      spec.t_comp = cfg.cluster.t_comp;
      spec.t_outer = cfg.cluster.t_outer;
      spec.param_bytes = cfg.cluster.param_bytes.value_or(
          8.0 * cfg.problem.dimension);
      spec.inter_bandwidth = cfg.cluster.inter_bandwidth;
      spec.latency = cfg.cluster.latency;
      spec.measured_override = cfg.cluster.measured_override;
      TimelineReport report =
          simulate_timeline(cfg.algorithm.kind, spec, tau, cfg.run.rounds,
                            cfg.inner.batch_size);
      ScalingRow row;
      row.workers = g;
      row.tau = tau;
      row.comm_time = report.comm_time;
      row.wall_time = report.wall_time;
      row.throughput = report.throughput;
      row.overlap_ratio_achieved = report.overlap_ratio_achieved;
      if (first_workers == 0) {
        first_workers = g;
        first_throughput = report.throughput;
        row.scalability_vs_first = 1.0;
      } else {
        row.scalability_vs_first = scalability_ratio(
            first_throughput, report.throughput, first_workers, g);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows,
                       const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw validation_error("cannot write " + path);
  csv << "# co2sim scaling v1\n";
  csv << "workers,tau,comm_time,wall_time,throughput,overlap_ratio_achieved,"
         "scalability_vs_first\n";
  for (const ScalingRow& r : rows) {
    csv << r.workers << ',' << r.tau << ',' << fmt17(r.comm_time) << ','
        << fmt17(r.wall_time) << ',' << fmt17(r.throughput) << ','
        << fmt17(r.overlap_ratio_achieved) << ','
        << fmt17(r.scalability_vs_first) << '\n';
  }
}

namespace {

ParamVector json_to_vector(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty()) {
    throw validation_error(std::string("fixture: ") + what +
                           " must be a non-empty array");
  }
  ParamVector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  }
  return v;
}

bool vectors_match(const ParamVector& expected, const ParamVector& got,
                   double tol) {
  if (expected.size() != got.size()) return false;
  for (Eigen::Index i = 0; i < expected.size(); ++i) {
    double e = expected(i);
    double g = got(i);
    if (tol == 0.0 ? e != g : std::abs(e - g) > tol) return false;
  }
  return true;
}

std::string vector_str(const ParamVector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += fmt17(v(i));
  }
  return s + "]";
}

struct FixtureChecker {
  std::ostream& out;
  bool ok = true;

  void check_vector(const std::string& label, const ParamVector& expected,
                    const ParamVector& got, double tol) {
    if (vectors_match(expected, got, tol)) {
      out << "ok       " << label << "\n";
    } else {
      ok = false;
      out << "MISMATCH " << label << ": expected " << vector_str(expected)
          << " got " << vector_str(got) << "\n";
    }
  }

  void check_scalar(const std::string& label, double expected, double got,
                    double tol) {
    bool match = tol == 0.0 ? expected == got : std::abs(expected - got) <= tol;
    if (match) {
      out << "ok       " << label << "\n";
    } else {
      ok = false;
      out << "MISMATCH " << label << ": expected " << fmt17(expected)
          << " got " << fmt17(got) << "\n";
    }
  }
};

}  // namespace

bool run_fixture_check(const std::string& fixture_path, std::ostream& out) {
  std::ifstream in(fixture_path);
  if (!in) throw validation_error("cannot open fixture: " + fixture_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw validation_error("fixture: JSON parse failure: " +
                           std::string(e.what()));
  }

  std::string name = j.value("name", fixture_path);
  double tol = j.value("tolerance", 0.0);

  // Dataset and shards are explicit so the trace is hand-checkable.
  Eigen::MatrixXd features(j.at("features").size(),
                           j.at("features").at(0).size());
  for (std::size_t i = 0; i < j.at("features").size(); ++i) {
    const json& row = j.at("features").at(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          row.at(c).get<double>();
    }
  }
  Eigen::VectorXd targets = json_to_vector(j.at("targets"), "targets");
  Problem problem = make_quadratic_from_data(features, targets);

  SimSetup setup;
  setup.kind = algorithm_kind_from_string(j.at("algorithm").get<std::string>());
  setup.tau = j.at("tau").get<int>();
  setup.inner.batch_size = j.at("batch_size").get<int>();
  int rounds = j.at("rounds").get<int>();
  setup.seed = j.value("seed", 0);
  setup.capture_traces = true;

  std::vector<std::vector<int>> shards;
  for (const json& rows : j.at("shards")) {
    shards.push_back(rows.get<std::vector<int>>());
  }
  setup.workers = static_cast<int>(shards.size());
  setup.explicit_shards = shards;
  setup.init_params = json_to_vector(j.at("init"), "init");

  if (j.contains("hyper")) {
    const json& h = j.at("hyper");
    setup.hyper.alpha = h.value("alpha", setup.hyper.alpha);
    setup.hyper.beta = h.value("beta", setup.hyper.beta);
    setup.hyper.phi = h.value("phi", setup.hyper.phi);
    setup.hyper.epsilon = h.value("epsilon", setup.hyper.epsilon);
    setup.hyper.penalty = h.value("penalty", setup.hyper.penalty);
    setup.hyper.clip = h.value("clip", setup.hyper.clip);
  }
  setup.schedule.kind =
      schedule_kind_from_string(j.at("schedule").value("kind", "constant"));
  setup.schedule.base_lr = j.at("schedule").at("base_lr").get<double>();
  setup.schedule.total_rounds = rounds;

  if (j.contains("cluster")) {
    const json& c = j.at("cluster");
    setup.cluster.t_comp = c.value("t_comp", 0.0);
    setup.cluster.t_outer = c.value("t_outer", 0.0);
    if (c.contains("measured_override")) {
      setup.cluster.measured_override =
          c.at("measured_override").get<double>();
    }
  } else {
    setup.cluster.measured_override = 0.0;  // zero-cost communication
  }

  Simulation sim(problem, setup);
  FixtureChecker checker{out};
  out << "fixture " << name << "\n";

  const json* expect_rounds = nullptr;
  if (j.at("expect").contains("rounds")) {
    expect_rounds = &j.at("expect").at("rounds");
  }

  for (int t = 0; t < rounds; ++t) {
    RoundRecord rec = sim.step();
    if (!expect_rounds || static_cast<std::size_t>(t) >= expect_rounds->size()) {
      continue;
    }
    const json& er = expect_rounds->at(t);
    if (er.contains("consumed_average")) {
      // Present only on rounds that consumed a reduce.
      checker.check_vector(
          "round " + std::to_string(t) + " consumed_average",
          json_to_vector(er.at("consumed_average"), "consumed_average"),
          rec.consumed_average, tol);
    }
    if (er.contains("workers")) {
      const json& ws = er.at("workers");
      for (std::size_t i = 0; i < ws.size(); ++i) {
        const json& w = ws.at(i);
        std::string prefix =
            "round " + std::to_string(t) + " worker " + std::to_string(i) + " ";
        if (w.contains("x_first")) {
          checker.check_vector(prefix + "x_first",
                               json_to_vector(w.at("x_first"), "x_first"),
                               rec.traces.at(i).x_first, tol);
        }
        if (w.contains("x_end")) {
          checker.check_vector(prefix + "x_end",
                               json_to_vector(w.at("x_end"), "x_end"),
                               rec.traces.at(i).x_end, tol);
        }
        if (w.contains("params_after")) {
          checker.check_vector(prefix + "params_after",
                               json_to_vector(w.at("params_after"), "params_after"),
                               sim.workers().at(i).params, tol);
        }
        if (w.contains("momentum_after")) {
          checker.check_vector(
              prefix + "momentum_after",
              json_to_vector(w.at("momentum_after"), "momentum_after"),
              sim.outer_states().at(i).momentum, tol);
        }
        if (w.contains("gap_after")) {
          checker.check_vector(prefix + "gap_after",
                               json_to_vector(w.at("gap_after"), "gap_after"),
                               sim.outer_states().at(i).gap, tol);
        }
      }
    }
  }

  const json& expect = j.at("expect");
  if (expect.contains("final_params")) {
    const json& fp = expect.at("final_params");
    for (std::size_t i = 0; i < fp.size(); ++i) {
      checker.check_vector("final params worker " + std::to_string(i),
                           json_to_vector(fp.at(i), "final_params"),
                           sim.workers().at(i).params, tol);
    }
  }
  if (expect.contains("final_momentum")) {
    const json& fm = expect.at("final_momentum");
    for (std::size_t i = 0; i < fm.size(); ++i) {
      checker.check_vector("final momentum worker " + std::to_string(i),
                           json_to_vector(fm.at(i), "final_momentum"),
                           sim.outer_states().at(i).momentum, tol);
    }
  }
  if (expect.contains("final_gap")) {
    const json& fg = expect.at("final_gap");
    for (std::size_t i = 0; i < fg.size(); ++i) {
      checker.check_vector("final gap worker " + std::to_string(i),
                           json_to_vector(fg.at(i), "final_gap"),
                           sim.outer_states().at(i).gap, tol);
    }
  }
  if (expect.contains("clock")) {
    checker.check_scalar("final clock", expect.at("clock").get<double>(),
                         sim.clock().now, tol);
  }
  if (expect.contains("total_stall")) {
    checker.check_scalar("total stall",
                         expect.at("total_stall").get<double>(),
                         sim.engine().total_stall(), tol);
  }

  out << (checker.ok ? "PASS " : "FAIL ") << name << "\n";
  return checker.ok;
}

}  // namespace co2sim
