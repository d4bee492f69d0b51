#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace co2sim {

// Parameter state is always a dense column vector of 64-bit doubles.
using ParamVector = Eigen::VectorXd;

// Throws numeric_error naming `context` if any entry of v is NaN or Inf.
void ensure_finite(const ParamVector& v, const std::string& context);

// Arithmetic mean over workers.  Coordinate j is accumulated in ascending
// worker-index order and divided by the worker count once, so the result is
// bit-reproducible for a fixed input order.
// Throws validation_error on an empty list or mismatched dimensions,
// numeric_error if the result is not finite.
ParamVector average(const std::vector<ParamVector>& contributions);

// Coordinate-wise clamp to [-phi, phi].  phi must be positive.
ParamVector clip_elementwise(const ParamVector& v, double phi);

// Coordinate-wise |a - b|.  Dimensions must match.
ParamVector elementwise_abs_diff(const ParamVector& a, const ParamVector& b);

// Euclidean norm.
double l2_norm(const ParamVector& v);

}  // namespace co2sim
