#pragma once

#include "co2sim/param_ops.hpp"
#include "co2sim/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace co2sim {

enum class ProblemKind { quadratic, logistic, mlp };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& name);

// A finite-sum objective f(x) = mean over rows of a per-sample loss.
// quadratic: 0.5 * (a.x - b)^2          (a = feature row, b = target)
// logistic:  softplus(z.x) - y * (z.x)  (binary cross-entropy, y in {0,1})
// mlp:       binary cross-entropy of a one-hidden-layer tanh network
//
// For mlp the parameter layout is [vec(W1) | b1 | w2 | b2] with W1 stored
// column-major as hidden_width x feature_dim, so dimension =
// hidden_width * (feature_dim + 2) + 1.
struct Problem {
  ProblemKind kind = ProblemKind::quadratic;
  int dimension = 0;
  Eigen::MatrixXd features;  // samples x feature_dim
  Eigen::VectorXd targets;   // samples
  int hidden_width = 0;      // mlp only
  std::optional<ParamVector> known_optimum;
  std::optional<double> known_optimal_loss;

  int samples() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

// Least squares with a controlled Hessian spectrum: A is built from its SVD
// so that the eigenvalues of (A^T A) / samples span [1/condition_number, 1]
// geometrically.  Targets are A x_true + noise * N(0, I); the optimum and its
// loss come from the normal equations.
Problem make_quadratic(int dimension, int samples, double condition_number,
                       double noise, std::uint64_t seed);

// Gaussian features, labels from a planted linear separator observed through
// additive noise, so classes overlap but are learnable.
Problem make_logistic(int dimension, int samples, std::uint64_t seed);

// Same data distribution as make_logistic; the model is a one-hidden-layer
// tanh network with a sigmoid output.
Problem make_mlp(int input_dim, int hidden_width, int samples,
                 std::uint64_t seed);

// Rebuilds a quadratic problem around an explicit dataset (fixtures, CSV
// imports).  The optimum is recomputed from the normal equations.
Problem make_quadratic_from_data(Eigen::MatrixXd features,
                                 Eigen::VectorXd targets);

struct DataShard {
  int worker_index = 0;
  std::vector<int> rows;  // ascending dataset row indices
  std::uint64_t seed = 0;
};

// Partitions rows into contiguous blocks of a deterministic permutation.
// Shard sizes differ by at most one, larger shards first.  heterogeneity in
// [0, 1] interpolates between a uniform shuffle (0) and target-sorted order
// (1), which skews the label distribution per shard.
std::vector<DataShard> shard(const Problem& problem, int workers,
                             std::uint64_t seed, double heterogeneity = 0.0);

struct GradSample {
  ParamVector gradient;
  double batch_loss = 0.0;
  std::vector<int> batch_rows;  // ascending dataset row indices
};

// Mini-batch gradient over batch_size rows sampled without replacement from
// the shard.  Selected rows are accumulated in ascending index order, so a
// full-shard batch reproduces shard_gradient bit for bit and consumes no
// randomness.
GradSample stochastic_gradient(const Problem& problem, const DataShard& shard,
                               const ParamVector& params, int batch_size,
                               RngStream& rng);

// Deterministic full-shard gradient.
GradSample shard_gradient(const Problem& problem, const DataShard& shard,
                          const ParamVector& params);

ParamVector full_gradient(const Problem& problem, const ParamVector& params);
double loss(const Problem& problem, const ParamVector& params);

// CSV with header f0,...,f{k-1},target; values are printed with enough
// digits to round-trip doubles exactly.
void write_dataset_csv(const Problem& problem, const std::string& path);
std::pair<Eigen::MatrixXd, Eigen::VectorXd> read_dataset_csv(
    const std::string& path);

}  // namespace co2sim
