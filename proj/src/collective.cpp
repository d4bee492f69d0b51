#include "co2sim/collective.hpp"

#include "co2sim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace co2sim {

std::string to_string(CommMode mode) {
  return mode == CommMode::simulated ? "simulated" : "threaded";
}

CommMode comm_mode_from_string(const std::string& name) {
  if (name == "simulated") return CommMode::simulated;
  if (name == "threaded") return CommMode::threaded;
  throw validation_error("unknown comm mode: " + name);
}

void Clock::advance(double dt) {
  if (!(dt >= 0.0)) {
    throw validation_error("clock: advance must be non-negative and finite");
  }
  now += dt;
}

CollectiveEngine::CollectiveEngine(const ClusterSpec& spec, CommMode mode)
    : spec_(spec), mode_(mode), comm_time_(allreduce_time(spec)) {}

std::uint64_t CollectiveEngine::launch_all_reduce(
    const std::vector<ParamVector>& contributions, Clock& clock) {
  if (static_cast<int>(contributions.size()) != spec_.workers) {
    throw validation_error("launch_all_reduce: contribution count " +
                           std::to_string(contributions.size()) +
                           " does not match worker count " +
                           std::to_string(spec_.workers));
  }
  if (live_ >= 2) {
    throw validation_error(
        "launch_all_reduce: overlap window exceeded, two reduces already live");
  }
  Record rec;
  rec.info.launch_time = clock.now;
  rec.info.completion_time = clock.now + comm_time_;
  rec.info.contributions = static_cast<int>(contributions.size());
  if (mode_ == CommMode::threaded) {
    rec.task = std::async(std::launch::async,
                          [snapshot = contributions] { return average(snapshot); });
  } else {
    rec.result = average(contributions);
  }
  std::uint64_t handle = records_.size();
  records_.push_back(std::move(rec));
  ++live_;
  events_.push_back({"launch", handle, clock.now, 0.0});
  return handle;
}

CollectiveEngine::Record& CollectiveEngine::record_for(std::uint64_t handle) {
  if (handle >= records_.size()) {
    throw validation_error("unknown reduce handle");
  }
  return records_[handle];
}

void CollectiveEngine::log_completion(Record& rec, std::uint64_t handle) {
  if (!rec.info.completion_logged) {
    rec.info.completion_logged = true;
    events_.push_back({"complete", handle, rec.info.completion_time, 0.0});
  }
}

bool CollectiveEngine::is_completed(std::uint64_t handle, const Clock& clock) {
  Record& rec = record_for(handle);
  if (rec.info.consumed) {
    throw validation_error("is_completed: handle already consumed");
  }
  bool done = clock.now >= rec.info.completion_time;
  rec.info.polled = true;
  rec.info.last_poll = done;
  if (done) {
    log_completion(rec, handle);
  }
  return done;
}

ParamVector CollectiveEngine::wait(std::uint64_t handle, Clock& clock) {
  Record& rec = record_for(handle);
  if (rec.info.consumed) {
    throw validation_error("wait: handle already consumed");
  }
  double stall = std::max(0.0, rec.info.completion_time - clock.now);
  clock.advance(stall);
  rec.info.consumed = true;
  rec.info.stall = stall;
  total_stall_ += stall;
  --live_;
  log_completion(rec, handle);
  events_.push_back({"wait", handle, clock.now, stall});
  if (mode_ == CommMode::threaded) {
    rec.result = rec.task.get();
  }
  return rec.result;
}

const CollectiveEngine::HandleInfo& CollectiveEngine::info(
    std::uint64_t handle) const {
  if (handle >= records_.size()) {
    throw validation_error("unknown reduce handle");
  }
  return records_[handle].info;
}

}  // namespace co2sim
