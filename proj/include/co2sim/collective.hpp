#pragma once

#include "co2sim/param_ops.hpp"
#include "co2sim/timing_model.hpp"

#include <cstdint>
#include <future>
#include <string>
#include <vector>

namespace co2sim {

enum class CommMode { simulated, threaded };

std::string to_string(CommMode mode);
CommMode comm_mode_from_string(const std::string& name);

// Simulated time.  Advancing is the only mutation and never goes backwards.
struct Clock {
  double now = 0.0;
  void advance(double dt);
};

struct ReduceEvent {
  std::string event;  // "launch" | "complete" | "wait"
  std::uint64_t handle_id = 0;
  double t_sim = 0.0;
  double stall = 0.0;  // nonzero only on wait events
};

// Asynchronous all-reduce under the simulated clock.  A launch snapshots the
// contributions and is complete once clock.now reaches launch time plus the
// modeled reduce cost (boundary inclusive).  The result is the exact
// fixed-order average of the contributions, so simulated and threaded modes
// produce bit-identical values; threads only move the arithmetic off the
// caller.
//
// Audit contract: at most two handles are ever live (the overlap window is
// one round), a handle is consumed exactly once, and a wait that stalls must
// have been preceded by a failed completion poll.
class CollectiveEngine {
 public:
  struct HandleInfo {
    double launch_time = 0.0;
    double completion_time = 0.0;
    int contributions = 0;
    bool consumed = false;
    bool polled = false;      // is_completed was called at least once
    bool last_poll = false;   // result of the most recent poll
    bool completion_logged = false;
    double stall = 0.0;       // stall paid when consumed
  };

  explicit CollectiveEngine(const ClusterSpec& spec,
                            CommMode mode = CommMode::simulated);

  // Returns a fresh handle id.  The contribution count must equal the
  // cluster's worker count.
  std::uint64_t launch_all_reduce(const std::vector<ParamVector>& contributions,
                                  Clock& clock);

  // Poll; never advances the clock.  Errors on a consumed handle.
  bool is_completed(std::uint64_t handle, const Clock& clock);

  // Consumes the handle: advances the clock to the completion time if it is
  // in the future (that difference is the stall) and returns the average.
  ParamVector wait(std::uint64_t handle, Clock& clock);

  double reduce_time() const { return comm_time_; }
  double total_stall() const { return total_stall_; }
  std::size_t live_handles() const { return live_; }
  std::size_t handle_count() const { return records_.size(); }
  const HandleInfo& info(std::uint64_t handle) const;
  const std::vector<ReduceEvent>& events() const { return events_; }

 private:
  struct Record {
    HandleInfo info;
    ParamVector result;               // simulated mode
    std::future<ParamVector> task;    // threaded mode
  };

  Record& record_for(std::uint64_t handle);
  void log_completion(Record& rec, std::uint64_t handle);

  ClusterSpec spec_;
  CommMode mode_;
  double comm_time_ = 0.0;
  double total_stall_ = 0.0;
  std::size_t live_ = 0;
  std::vector<Record> records_;
  std::vector<ReduceEvent> events_;
};

}  // namespace co2sim
