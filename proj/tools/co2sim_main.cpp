// Command-line front end: run / ablate / scale / fixture-check.
// Exit codes: 0 success, 1 fixture mismatch, 2 validation error,
// 3 numeric failure.

#include "co2sim/config.hpp"
#include "co2sim/errors.hpp"
#include "co2sim/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> algo;
  std::optional<int> tau;
};

void add_common(CLI::App* sub, CommonFlags& flags, bool with_overrides) {
  sub->add_option("--config", flags.config_path, "config JSON path")
      ->required();
  sub->add_option("--out", flags.out_dir, "output directory");
  if (with_overrides) {
    sub->add_option("--seed", flags.seed, "override run.seed");
    sub->add_option("--algo", flags.algo,
                    "override algorithm.kind "
                    "(co2|slowmo|local_sgd|overlap_local_sgd|sync_sgd)");
    sub->add_option("--tau", flags.tau, "override inner.tau");
  }
}

co2sim::RunConfig load_with_overrides(const CommonFlags& flags) {
  co2sim::RunConfig cfg = co2sim::load_config(flags.config_path);
  if (flags.seed) cfg.run.seed = *flags.seed;
  if (flags.algo) {
    cfg.algorithm.kind = co2sim::algorithm_kind_from_string(*flags.algo);
  }
  if (flags.tau) cfg.inner.tau = *flags.tau;
  if (flags.out_dir) cfg.run.out_dir = *flags.out_dir;
  cfg.validate();
  return cfg;
}

int cmd_run(const CommonFlags& flags) {
  co2sim::RunConfig cfg = load_with_overrides(flags);
  co2sim::ExperimentResult result = co2sim::run_experiment(cfg);
  if (cfg.run.out_dir) {
    co2sim::write_experiment_outputs(result, *cfg.run.out_dir);
  }
  std::printf("algorithm=%s workers=%d tau=%d rounds=%d repeats=%d\n",
              co2sim::to_string(cfg.algorithm.kind).c_str(), cfg.run.workers,
              cfg.inner.tau, cfg.run.rounds, cfg.run.repeats);
  for (const co2sim::SeedRunResult& s : result.seeds) {
    std::printf(
        "seed=%llu final_loss=%.17g final_grad_sq=%.17g wall=%.17g "
        "stall=%.17g diverged=%d\n",
        static_cast<unsigned long long>(s.seed), s.final_loss, s.final_grad_sq,
        s.wall_time, s.total_stall, s.diverged ? 1 : 0);
  }
  std::printf("mean_final_loss=%.17g std_final_loss=%.17g\n",
              result.mean_final_loss, result.std_final_loss);
  return result.any_diverged ? 3 : 0;
}

int cmd_ablate(const CommonFlags& flags) {
  co2sim::RunConfig cfg = load_with_overrides(flags);
  co2sim::AblationResult result = co2sim::run_ablation(cfg);
  if (cfg.run.out_dir) {
    std::filesystem::create_directories(*cfg.run.out_dir);
    co2sim::write_ablation_csv(
        result, (std::filesystem::path(*cfg.run.out_dir) / "ablation.csv")
                    .string());
  }
  for (const co2sim::AblationRow& r : result.rows) {
    std::printf("variant=%s seed=%llu final_loss=%.17g diverged=%d\n",
                r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                r.final_loss, r.diverged ? 1 : 0);
  }
  std::printf("mean full=%.17g no_penalty=%.17g no_clip=%.17g\n",
              result.mean_full, result.mean_no_penalty, result.mean_no_clip);
  return 0;
}

int cmd_scale(const CommonFlags& flags) {
  co2sim::RunConfig cfg = load_with_overrides(flags);
  std::vector<co2sim::ScalingRow> rows = co2sim::run_scaling_sweep(cfg);
  if (cfg.run.out_dir) {
    std::filesystem::create_directories(*cfg.run.out_dir);
    co2sim::write_scaling_csv(
        rows,
        (std::filesystem::path(*cfg.run.out_dir) / "scaling.csv").string());
  }
  for (const co2sim::ScalingRow& r : rows) {
    std::printf(
        "workers=%d tau=%d throughput=%.17g scalability=%.17g overlap=%.17g\n",
        r.workers, r.tau, r.throughput, r.scalability_vs_first,
        r.overlap_ratio_achieved);
  }
  return 0;
}

int cmd_fixture_check(const CommonFlags& flags) {
  bool ok = co2sim::run_fixture_check(flags.config_path, std::cout);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic distributed-training simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, ablate_flags, scale_flags, fixture_flags;
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_common(run, run_flags, true);
  CLI::App* ablate =
      app.add_subcommand("ablate", "penalty/clip ablation with paired seeds");
  add_common(ablate, ablate_flags, true);
  CLI::App* scale =
      app.add_subcommand("scale", "timing-model scaling sweep");
  add_common(scale, scale_flags, false);
  CLI::App* fixture = app.add_subcommand(
      "fixture-check", "replay a recorded trace fixture and compare");
  fixture->add_option("--config", fixture_flags.config_path,
                      "fixture JSON path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (ablate->parsed()) return cmd_ablate(ablate_flags);
    if (scale->parsed()) return cmd_scale(scale_flags);
    if (fixture->parsed()) return cmd_fixture_check(fixture_flags);
  } catch (const co2sim::validation_error& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const co2sim::numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  }
  return 0;
}
