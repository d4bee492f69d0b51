#include "co2sim/param_ops.hpp"

#include "co2sim/errors.hpp"

#include <cmath>
#include <cstddef>

namespace co2sim {

void ensure_finite(const ParamVector& v, const std::string& context) {
  if (!v.allFinite()) {
    throw numeric_error("non-finite value in " + context);
  }
}

ParamVector average(const std::vector<ParamVector>& contributions) {
  if (contributions.empty()) {
    throw validation_error("average: empty contribution list");
  }
  const Eigen::Index n = contributions.front().size();
  for (const ParamVector& c : contributions) {
    if (c.size() != n) {
      throw validation_error("average: contribution dimensions differ");
    }
  }
  ParamVector sum = contributions.front();
  for (std::size_t i = 1; i < contributions.size(); ++i) {
    sum += contributions[i];
  }
  ParamVector result = sum / static_cast<double>(contributions.size());
  ensure_finite(result, "average");
  return result;
}

ParamVector clip_elementwise(const ParamVector& v, double phi) {
  if (!(phi > 0.0)) {
    throw validation_error("clip_elementwise: phi must be positive");
  }
  // Checked on input: clamping could otherwise turn a NaN into a bound and
  // hide the corruption.
  ensure_finite(v, "clip_elementwise input");
  return v.cwiseMax(-phi).cwiseMin(phi);
}

ParamVector elementwise_abs_diff(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw validation_error("elementwise_abs_diff: dimensions differ");
  }
  ParamVector result = (a - b).cwiseAbs();
  ensure_finite(result, "elementwise_abs_diff");
  return result;
}

double l2_norm(const ParamVector& v) {
  double n = v.norm();
  if (!std::isfinite(n)) {
    throw numeric_error("l2_norm: non-finite result");
  }
  return n;
}

}  // namespace co2sim
