#include "co2sim/config.hpp"

#include "co2sim/errors.hpp"

#include <fstream>
#include <initializer_list>
#include <string>

namespace co2sim {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& section,
                         std::initializer_list<const char*> known) {
  if (!j.is_object()) {
    throw validation_error("config: '" + section + "' must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const char* k : known) {
      if (it.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw validation_error("config: unknown key '" + section + "." +
                             it.key() + "'");
    }
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

template <typename T>
T fetch(const json& j, const std::string& section, const char* key, T fallback,
        bool required = false) {
  const json* v = find(j, key);
  if (!v) {
    if (required) {
      throw validation_error("config: missing required key '" + section + "." +
                             key + "'");
    }
    return fallback;
  }
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw validation_error("config: bad value for '" + section + "." + key +
                           "'");
  }
}

}  // namespace

RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw validation_error("config: root must be an object");
  reject_unknown_keys(j, "<root>",
                      {"problem", "algorithm", "schedule", "inner", "cluster",
                       "run", "sweep"});
  RunConfig cfg;

  const json empty = json::object();
  const json& jp = find(j, "problem") ? j.at("problem") : empty;
  reject_unknown_keys(jp, "problem",
                      {"kind", "dimension", "samples", "condition_number",
                       "noise", "hidden_width", "seed", "heterogeneity"});
  cfg.problem.kind = problem_kind_from_string(
      fetch<std::string>(jp, "problem", "kind", "", true));
  cfg.problem.dimension =
      fetch<int>(jp, "problem", "dimension", cfg.problem.dimension);
  cfg.problem.samples =
      fetch<int>(jp, "problem", "samples", cfg.problem.samples);
  cfg.problem.condition_number = fetch<double>(
      jp, "problem", "condition_number", cfg.problem.condition_number);
  cfg.problem.noise = fetch<double>(jp, "problem", "noise", cfg.problem.noise);
  cfg.problem.hidden_width =
      fetch<int>(jp, "problem", "hidden_width", cfg.problem.hidden_width);
  cfg.problem.seed =
      fetch<std::uint64_t>(jp, "problem", "seed", cfg.problem.seed);
  cfg.problem.heterogeneity = fetch<double>(jp, "problem", "heterogeneity",
                                            cfg.problem.heterogeneity);

  const json& ja = find(j, "algorithm") ? j.at("algorithm") : empty;
  reject_unknown_keys(ja, "algorithm",
                      {"kind", "alpha", "beta", "phi", "epsilon", "penalty",
                       "clip", "ghost_consistent"});
  cfg.algorithm.kind = algorithm_kind_from_string(
      fetch<std::string>(ja, "algorithm", "kind", to_string(cfg.algorithm.kind)));
  cfg.algorithm.alpha =
      fetch<double>(ja, "algorithm", "alpha", cfg.algorithm.alpha);
  cfg.algorithm.beta = fetch<double>(ja, "algorithm", "beta", cfg.algorithm.beta);
  cfg.algorithm.phi = fetch<double>(ja, "algorithm", "phi", cfg.algorithm.phi);
  cfg.algorithm.epsilon =
      fetch<double>(ja, "algorithm", "epsilon", cfg.algorithm.epsilon);
  cfg.algorithm.penalty =
      fetch<bool>(ja, "algorithm", "penalty", cfg.algorithm.penalty);
  cfg.algorithm.clip = fetch<bool>(ja, "algorithm", "clip", cfg.algorithm.clip);
  cfg.algorithm.ghost_consistent = fetch<bool>(
      ja, "algorithm", "ghost_consistent", cfg.algorithm.ghost_consistent);

  const json& js = find(j, "schedule") ? j.at("schedule") : empty;
  reject_unknown_keys(js, "schedule", {"kind", "base_lr", "warmup_rounds"});
  cfg.schedule.kind = schedule_kind_from_string(
      fetch<std::string>(js, "schedule", "kind", to_string(cfg.schedule.kind)));
  cfg.schedule.base_lr = fetch<double>(js, "schedule", "base_lr", 0.0, true);
  cfg.schedule.warmup_rounds =
      fetch<int>(js, "schedule", "warmup_rounds", cfg.schedule.warmup_rounds);

  const json& ji = find(j, "inner") ? j.at("inner") : empty;
  reject_unknown_keys(ji, "inner", {"tau", "batch_size", "momentum"});
  cfg.inner.tau = fetch<int>(ji, "inner", "tau", 0, true);
  cfg.inner.batch_size = fetch<int>(ji, "inner", "batch_size", 0, true);
  cfg.inner.momentum = fetch<double>(ji, "inner", "momentum", cfg.inner.momentum);

  const json& jc = find(j, "cluster") ? j.at("cluster") : empty;
  reject_unknown_keys(jc, "cluster",
                      {"gpus_per_node", "t_comp", "t_outer", "param_bytes",
                       "inter_bandwidth", "latency", "measured_override"});
  cfg.cluster.gpus_per_node =
      fetch<int>(jc, "cluster", "gpus_per_node", cfg.cluster.gpus_per_node);
  cfg.cluster.t_comp = fetch<double>(jc, "cluster", "t_comp", cfg.cluster.t_comp);
  cfg.cluster.t_outer =
      fetch<double>(jc, "cluster", "t_outer", cfg.cluster.t_outer);
  if (find(jc, "param_bytes")) {
    cfg.cluster.param_bytes = fetch<double>(jc, "cluster", "param_bytes", 0.0);
  }
  cfg.cluster.inter_bandwidth = fetch<double>(jc, "cluster", "inter_bandwidth",
                                              cfg.cluster.inter_bandwidth);
  cfg.cluster.latency =
      fetch<double>(jc, "cluster", "latency", cfg.cluster.latency);
  if (find(jc, "measured_override")) {
    cfg.cluster.measured_override =
        fetch<double>(jc, "cluster", "measured_override", 0.0);
  }

  const json& jr = find(j, "run") ? j.at("run") : empty;
  reject_unknown_keys(
      jr, "run", {"workers", "rounds", "seed", "repeats", "comm_mode", "out_dir"});
  cfg.run.workers = fetch<int>(jr, "run", "workers", 0, true);
  cfg.run.rounds = fetch<int>(jr, "run", "rounds", 0, true);
  cfg.run.seed = fetch<std::uint64_t>(jr, "run", "seed", cfg.run.seed);
  cfg.run.repeats = fetch<int>(jr, "run", "repeats", cfg.run.repeats);
  cfg.run.comm_mode = comm_mode_from_string(
      fetch<std::string>(jr, "run", "comm_mode", to_string(cfg.run.comm_mode)));
  if (find(jr, "out_dir")) {
    cfg.run.out_dir = fetch<std::string>(jr, "run", "out_dir", "");
  }

  const json& jw = find(j, "sweep") ? j.at("sweep") : empty;
  reject_unknown_keys(jw, "sweep", {"workers_list", "tau_list"});
  cfg.sweep.workers_list = fetch<std::vector<int>>(jw, "sweep", "workers_list",
                                                   {cfg.run.workers});
  cfg.sweep.tau_list =
      fetch<std::vector<int>>(jw, "sweep", "tau_list", {cfg.inner.tau});

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw validation_error("config: JSON parse failure in " + path + ": " +
                           e.what());
  }
  return parse_config(j);
}

void RunConfig::validate() const {
  if (problem.dimension < 1) {
    throw validation_error("config: problem.dimension must be >= 1");
  }
  if (problem.samples < 1) {
    throw validation_error("config: problem.samples must be >= 1");
  }
  if (problem.kind == ProblemKind::quadratic &&
      problem.samples < problem.dimension) {
    throw validation_error("config: quadratic needs samples >= dimension");
  }
  if (!(problem.condition_number >= 1.0)) {
    throw validation_error("config: problem.condition_number must be >= 1");
  }
  if (problem.noise < 0.0) {
    throw validation_error("config: problem.noise must be >= 0");
  }
  if (problem.kind == ProblemKind::mlp && problem.hidden_width < 1) {
    throw validation_error("config: problem.hidden_width must be >= 1");
  }
  if (problem.heterogeneity < 0.0 || problem.heterogeneity > 1.0) {
    throw validation_error("config: problem.heterogeneity outside [0, 1]");
  }

  Co2Hyper hyper{algorithm.alpha, algorithm.beta,    algorithm.phi,
                 algorithm.epsilon, algorithm.penalty, algorithm.clip,
                 algorithm.ghost_consistent};
  hyper.validate();
  if (algorithm.kind == AlgorithmKind::co2 && algorithm.beta == 0.0) {
    throw validation_error("config: co2 requires beta in (0, 1)");
  }

  if (inner.tau < 1) throw validation_error("config: inner.tau must be >= 1");
  if (inner.batch_size < 1) {
    throw validation_error("config: inner.batch_size must be >= 1");
  }
  if (inner.momentum < 0.0 || inner.momentum >= 1.0) {
    throw validation_error("config: inner.momentum outside [0, 1)");
  }

  if (run.workers < 1) {
    throw validation_error("config: run.workers must be >= 1");
  }
  if (run.workers > problem.samples) {
    throw validation_error("config: run.workers exceeds problem.samples");
  }
  // Shards differ in size by at most one; the smallest holds the floor.
  if (inner.batch_size > problem.samples / run.workers) {
    throw validation_error(
        "config: inner.batch_size exceeds the smallest shard (" +
        std::to_string(problem.samples / run.workers) + " rows)");
  }
  if (run.rounds < 1) throw validation_error("config: run.rounds must be >= 1");
  if (run.repeats < 1) {
    throw validation_error("config: run.repeats must be >= 1");
  }

  InnerSchedule sched{schedule.kind, schedule.base_lr, run.rounds,
                      schedule.warmup_rounds};
  sched.validate();

  ClusterSpec spec;
  spec.workers = run.workers;
  spec.gpus_per_node = cluster.gpus_per_node;
  spec.t_comp = cluster.t_comp;
  spec.t_outer = cluster.t_outer;
  spec.param_bytes = cluster.param_bytes.value_or(0.0);
  spec.inter_bandwidth = cluster.inter_bandwidth;
  spec.latency = cluster.latency;
  spec.measured_override = cluster.measured_override;
  spec.validate();

  if (sweep.workers_list.empty() || sweep.tau_list.empty()) {
    throw validation_error("config: sweep lists must be non-empty");
  }
  for (int g : sweep.workers_list) {
    if (g < 1) throw validation_error("config: sweep.workers_list entry < 1");
  }
  for (int t : sweep.tau_list) {
    if (t < 1) throw validation_error("config: sweep.tau_list entry < 1");
  }
}

nlohmann::json emit_config(const RunConfig& cfg) {
  json j;
  j["problem"] = {{"kind", to_string(cfg.problem.kind)},
                  {"dimension", cfg.problem.dimension},
                  {"samples", cfg.problem.samples},
                  {"condition_number", cfg.problem.condition_number},
                  {"noise", cfg.problem.noise},
                  {"hidden_width", cfg.problem.hidden_width},
                  {"seed", cfg.problem.seed},
                  {"heterogeneity", cfg.problem.heterogeneity}};
  j["algorithm"] = {{"kind", to_string(cfg.algorithm.kind)},
                    {"alpha", cfg.algorithm.alpha},
                    {"beta", cfg.algorithm.beta},
                    {"phi", cfg.algorithm.phi},
                    {"epsilon", cfg.algorithm.epsilon},
                    {"penalty", cfg.algorithm.penalty},
                    {"clip", cfg.algorithm.clip},
                    {"ghost_consistent", cfg.algorithm.ghost_consistent}};
  j["schedule"] = {{"kind", to_string(cfg.schedule.kind)},
                   {"base_lr", cfg.schedule.base_lr},
                   {"warmup_rounds", cfg.schedule.warmup_rounds}};
  j["inner"] = {{"tau", cfg.inner.tau},
                {"batch_size", cfg.inner.batch_size},
                {"momentum", cfg.inner.momentum}};
  j["cluster"] = {{"gpus_per_node", cfg.cluster.gpus_per_node},
                  {"t_comp", cfg.cluster.t_comp},
                  {"t_outer", cfg.cluster.t_outer},
                  {"param_bytes", cfg.cluster.param_bytes
                                      ? json(*cfg.cluster.param_bytes)
                                      : json(nullptr)},
                  {"inter_bandwidth", cfg.cluster.inter_bandwidth},
                  {"latency", cfg.cluster.latency},
                  {"measured_override", cfg.cluster.measured_override
                                            ? json(*cfg.cluster.measured_override)
                                            : json(nullptr)}};
  j["run"] = {{"workers", cfg.run.workers},
              {"rounds", cfg.run.rounds},
              {"seed", cfg.run.seed},
              {"repeats", cfg.run.repeats},
              {"comm_mode", to_string(cfg.run.comm_mode)},
              {"out_dir",
               cfg.run.out_dir ? json(*cfg.run.out_dir) : json(nullptr)}};
  j["sweep"] = {{"workers_list", cfg.sweep.workers_list},
                {"tau_list", cfg.sweep.tau_list}};
  return j;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return emit_config(a) == emit_config(b);
}

std::uint64_t effective_problem_seed(const RunConfig& cfg,
                                     std::uint64_t run_seed) {
  return cfg.problem.seed * 0x9E3779B97F4A7C15ull + run_seed;
}

Problem build_problem(const RunConfig& cfg, std::uint64_t run_seed) {
  std::uint64_t seed = effective_problem_seed(cfg, run_seed);
  switch (cfg.problem.kind) {
    case ProblemKind::quadratic:
      return make_quadratic(cfg.problem.dimension, cfg.problem.samples,
                            cfg.problem.condition_number, cfg.problem.noise,
                            seed);
    case ProblemKind::logistic:
      return make_logistic(cfg.problem.dimension, cfg.problem.samples, seed);
    case ProblemKind::mlp:
      return make_mlp(cfg.problem.dimension, cfg.problem.hidden_width,
                      cfg.problem.samples, seed);
  }
  throw validation_error("config: unknown problem kind");
}

SimSetup build_setup(const RunConfig& cfg, std::uint64_t run_seed,
                     const Problem& problem) {
  SimSetup s;
  s.kind = cfg.algorithm.kind;
  s.workers = cfg.run.workers;
  s.tau = cfg.inner.tau;
  s.hyper = Co2Hyper{cfg.algorithm.alpha,   cfg.algorithm.beta,
                     cfg.algorithm.phi,     cfg.algorithm.epsilon,
                     cfg.algorithm.penalty, cfg.algorithm.clip,
                     cfg.algorithm.ghost_consistent};
  s.schedule = InnerSchedule{cfg.schedule.kind, cfg.schedule.base_lr,
                             cfg.run.rounds, cfg.schedule.warmup_rounds};
  s.inner = InnerOptions{cfg.inner.batch_size, cfg.inner.momentum};
  s.seed = run_seed;
  s.cluster.workers = cfg.run.workers;
  s.cluster.gpus_per_node = cfg.cluster.gpus_per_node;
  s.cluster.t_comp = cfg.cluster.t_comp;
  s.cluster.t_outer = cfg.cluster.t_outer;
  s.cluster.param_bytes =
      cfg.cluster.param_bytes.value_or(8.0 * problem.dimension);
  s.cluster.inter_bandwidth = cfg.cluster.inter_bandwidth;
  s.cluster.latency = cfg.cluster.latency;
  s.cluster.measured_override = cfg.cluster.measured_override;
  s.comm_mode = cfg.run.comm_mode;
  s.heterogeneity = cfg.problem.heterogeneity;
  return s;
}

}  // namespace co2sim
