#pragma once

#include "co2sim/errors.hpp"

#include <string>

namespace co2sim {

enum class AlgorithmKind { co2, slowmo, local_sgd, overlap_local_sgd, sync_sgd };

inline std::string to_string(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::co2: return "co2";
    case AlgorithmKind::slowmo: return "slowmo";
    case AlgorithmKind::local_sgd: return "local_sgd";
    case AlgorithmKind::overlap_local_sgd: return "overlap_local_sgd";
    case AlgorithmKind::sync_sgd: return "sync_sgd";
  }
  return "unknown";
}

inline AlgorithmKind algorithm_kind_from_string(const std::string& name) {
  if (name == "co2") return AlgorithmKind::co2;
  if (name == "slowmo") return AlgorithmKind::slowmo;
  if (name == "local_sgd") return AlgorithmKind::local_sgd;
  if (name == "overlap_local_sgd") return AlgorithmKind::overlap_local_sgd;
  if (name == "sync_sgd") return AlgorithmKind::sync_sgd;
  throw validation_error("unknown algorithm kind: " + name);
}

}  // namespace co2sim
