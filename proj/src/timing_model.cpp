#include "co2sim/timing_model.hpp"

#include "co2sim/errors.hpp"

#include <algorithm>
#include <cmath>

namespace co2sim {

void ClusterSpec::validate() const {
  if (workers < 1) throw validation_error("cluster: workers must be >= 1");
  if (gpus_per_node < 1) {
    throw validation_error("cluster: gpus_per_node must be >= 1");
  }
  if (t_comp < 0.0) throw validation_error("cluster: negative t_comp");
  if (t_outer < 0.0) throw validation_error("cluster: negative t_outer");
  if (param_bytes < 0.0) throw validation_error("cluster: negative param_bytes");
  if (!(inter_bandwidth > 0.0)) {
    throw validation_error("cluster: inter_bandwidth must be positive");
  }
  if (latency < 0.0) throw validation_error("cluster: negative latency");
  if (measured_override && *measured_override < 0.0) {
    throw validation_error("cluster: negative measured_override");
  }
}

double allreduce_time(const ClusterSpec& spec) {
  spec.validate();
  if (spec.workers < 2) return 0.0;
  if (spec.measured_override) return *spec.measured_override;
  double g = static_cast<double>(spec.workers);
  return 2.0 * (g - 1.0) * spec.latency +
         2.0 * ((g - 1.0) / g) * spec.param_bytes / spec.inter_bandwidth;
}

double overlap_ratio(int tau, double t_comp, double t_comm) {
  if (tau < 1) throw validation_error("overlap_ratio: tau must be >= 1");
  if (t_comp < 0.0 || t_comm < 0.0) {
    throw validation_error("overlap_ratio: negative time");
  }
  if (t_comm <= 0.0) return 1.0;
  return std::min(1.0, tau * t_comp / t_comm);
}

double scalability_ratio(double throughput_small, double throughput_large,
                         double workers_small, double workers_large) {
  if (!(throughput_small > 0.0) || !(workers_small > 0.0) ||
      !(workers_large > 0.0)) {
    throw validation_error("scalability_ratio: non-positive input");
  }
  return (throughput_large / throughput_small) /
         (workers_large / workers_small);
}

nlohmann::json to_json(const TimelineReport& r) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const RoundTiming& rt : r.per_round) {
    rounds.push_back({{"t", rt.t},
                      {"start", rt.start},
                      {"stall", rt.stall},
                      {"end", rt.end}});
  }
  return nlohmann::json{{"algorithm", to_string(r.kind)},
                        {"workers", r.workers},
                        {"tau", r.tau},
                        {"rounds", r.rounds},
                        {"batch_size", r.batch_size},
                        {"comm_time", r.comm_time},
                        {"wall_time", r.wall_time},
                        {"total_stall", r.total_stall},
                        {"overlap_ratio_achieved", r.overlap_ratio_achieved},
                        {"throughput", r.throughput},
                        {"per_round", std::move(rounds)}};
}

TimelineReport simulate_timeline(AlgorithmKind kind, const ClusterSpec& spec,
                                 int tau, int rounds, int batch_size) {
  spec.validate();
  if (tau < 1) throw validation_error("simulate_timeline: tau must be >= 1");
  if (rounds < 1) throw validation_error("simulate_timeline: rounds must be >= 1");
  if (batch_size < 1) {
    throw validation_error("simulate_timeline: batch_size must be >= 1");
  }

  double comm = allreduce_time(spec);
  double now = 0.0;
  double total_stall = 0.0;
  double waited_comm = 0.0;  // communication on the critical-path waits
  TimelineReport report;
  report.kind = kind;
  report.workers = spec.workers;
  report.tau = tau;
  report.rounds = rounds;
  report.batch_size = batch_size;
  report.comm_time = comm;
  report.per_round.reserve(rounds);

  // Completion time of the not-yet-consumed reduce, if any.
  bool has_pending = false;
  double pending = 0.0;

  for (int t = 0; t < rounds; ++t) {
    RoundTiming rt;
    rt.t = t;
    rt.start = now;
    switch (kind) {
      case AlgorithmKind::co2: {
        now += tau * spec.t_comp;
        double launched = now + comm;
        if (t == 0) {
          pending = launched;
          has_pending = true;
          break;  // first round skips the outer update entirely
        }
        double stall = std::max(0.0, pending - now);
        now += stall;
        rt.stall = stall;
        total_stall += stall;
        waited_comm += comm;
        pending = launched;
        now += spec.t_outer;
        break;
      }
      case AlgorithmKind::slowmo:
      case AlgorithmKind::local_sgd: {
        now += tau * spec.t_comp;
        rt.stall = comm;
        total_stall += comm;
        waited_comm += comm;
        now += comm;
        now += spec.t_outer;
        break;
      }
      case AlgorithmKind::overlap_local_sgd: {
        now += tau * spec.t_comp;
        if (has_pending) {
          double stall = std::max(0.0, pending - now);
          now += stall;
          rt.stall = stall;
          total_stall += stall;
          waited_comm += comm;
          has_pending = false;
        }
        if (comm > 0.0) {
          // An instant reduce would be consumed in the same round.
          pending = now + comm;
          has_pending = true;
        }
        now += spec.t_outer;
        break;
      }
      case AlgorithmKind::sync_sgd: {
        for (int k = 0; k < tau; ++k) {
          now += spec.t_comp;
          rt.stall += comm;
          total_stall += comm;
          waited_comm += comm;
          now += comm;
        }
        break;
      }
    }
    rt.end = now;
    report.per_round.push_back(rt);
  }

  report.wall_time = now;
  report.total_stall = total_stall;
  report.overlap_ratio_achieved =
      waited_comm > 0.0 ? 1.0 - total_stall / waited_comm : 1.0;
  double work = static_cast<double>(rounds) * tau * spec.workers * batch_size;
  report.throughput = now > 0.0 ? work / now : 0.0;
  return report;
}

}  // namespace co2sim
