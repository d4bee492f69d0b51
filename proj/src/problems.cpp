#include "co2sim/problems.hpp"

#include "co2sim/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace co2sim {

namespace {

double softplus(double s) {
  return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

double sigmoid(double s) {
  if (s >= 0.0) {
    return 1.0 / (1.0 + std::exp(-s));
  }
  double e = std::exp(s);
  return e / (1.0 + e);
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = rng.next_gaussian();
    }
  }
  return m;
}

struct MlpView {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::VectorXd> w2;
  double b2;
};

MlpView mlp_view(const Problem& p, const ParamVector& x) {
  int d = p.feature_dim();
  int h = p.hidden_width;
  return MlpView{
      Eigen::Map<const Eigen::MatrixXd>(x.data(), h, d),
      Eigen::Map<const Eigen::VectorXd>(x.data() + h * d, h),
      Eigen::Map<const Eigen::VectorXd>(x.data() + h * d + h, h),
      x(h * d + 2 * h)};
}

// Per-sample loss; adds the per-sample gradient into grad when non-null.
double sample_loss(const Problem& p, int row, const ParamVector& x,
                   ParamVector* grad) {
  switch (p.kind) {
    case ProblemKind::quadratic: {
      double r = p.features.row(row).dot(x) - p.targets(row);
      if (grad) {
        grad->noalias() += r * p.features.row(row).transpose();
      }
      return 0.5 * r * r;
    }
    case ProblemKind::logistic: {
      double s = p.features.row(row).dot(x);
      double y = p.targets(row);
      if (grad) {
        grad->noalias() += (sigmoid(s) - y) * p.features.row(row).transpose();
      }
      return softplus(s) - y * s;
    }
    case ProblemKind::mlp: {
      MlpView v = mlp_view(p, x);
      Eigen::VectorXd z = p.features.row(row).transpose();
      Eigen::VectorXd act = (v.w1 * z + v.b1).array().tanh().matrix();
      double s = v.w2.dot(act) + v.b2;
      double y = p.targets(row);
      if (grad) {
        int d = p.feature_dim();
        int h = p.hidden_width;
        double ds = sigmoid(s) - y;
        Eigen::VectorXd dpre =
            (ds * v.w2.array() * (1.0 - act.array().square())).matrix();
        Eigen::Map<Eigen::MatrixXd>(grad->data(), h, d).noalias() +=
            dpre * z.transpose();
        grad->segment(h * d, h) += dpre;
        grad->segment(h * d + h, h) += ds * act;
        (*grad)(h * d + 2 * h) += ds;
      }
      return softplus(s) - y * s;
    }
  }
  throw validation_error("sample_loss: unknown problem kind");
}

// Mean loss/gradient over rows, accumulated in the order given.
GradSample accumulate(const Problem& p, const std::vector<int>& rows,
                      const ParamVector& x) {
  if (x.size() != p.dimension) {
    throw validation_error("gradient: params dimension mismatch");
  }
  if (rows.empty()) {
    throw validation_error("gradient: empty row set");
  }
  GradSample out;
  out.gradient = ParamVector::Zero(p.dimension);
  double total = 0.0;
  for (int r : rows) {
    total += sample_loss(p, r, x, &out.gradient);
  }
  double count = static_cast<double>(rows.size());
  out.gradient /= count;
  out.batch_loss = total / count;
  out.batch_rows = rows;
  ensure_finite(out.gradient, "gradient");
  if (!std::isfinite(out.batch_loss)) {
    throw numeric_error("non-finite batch loss");
  }
  return out;
}

void validate_dataset_shape(const Eigen::MatrixXd& features,
                            const Eigen::VectorXd& targets) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw validation_error("dataset: empty feature matrix");
  }
  if (features.rows() != targets.size()) {
    throw validation_error("dataset: feature/target row counts differ");
  }
}

}  // namespace

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::quadratic: return "quadratic";
    case ProblemKind::logistic: return "logistic";
    case ProblemKind::mlp: return "mlp";
  }
  return "unknown";
}

ProblemKind problem_kind_from_string(const std::string& name) {
  if (name == "quadratic") return ProblemKind::quadratic;
  if (name == "logistic") return ProblemKind::logistic;
  if (name == "mlp") return ProblemKind::mlp;
  throw validation_error("unknown problem kind: " + name);
}

Problem make_quadratic(int dimension, int samples, double condition_number,
                       double noise, std::uint64_t seed) {
  if (dimension < 1) throw validation_error("make_quadratic: dimension < 1");
  if (samples < dimension) {
    throw validation_error("make_quadratic: samples < dimension");
  }
  if (!(condition_number >= 1.0)) {
    throw validation_error("make_quadratic: condition_number < 1");
  }
  if (noise < 0.0) throw validation_error("make_quadratic: negative noise");

  RngStream rng(seed, kDataStream);
  int n = dimension;
  int m = samples;

  // Orthonormal factors from QR of Gaussian matrices.
  Eigen::MatrixXd u =
      Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(m, n, rng))
          .householderQ() *
      Eigen::MatrixXd::Identity(m, n);
  Eigen::MatrixXd v =
      Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(n, n, rng))
          .householderQ() *
      Eigen::MatrixXd::Identity(n, n);

  // Geometric spectrum from 1 down to 1/condition_number, so the Hessian
  // (A^T A) / m has L = 1 and mu = 1 / condition_number.
  Eigen::VectorXd singular(n);
  for (int j = 0; j < n; ++j) {
    double expo = n > 1 ? static_cast<double>(j) / (n - 1) : 0.0;
    singular(j) = std::sqrt(static_cast<double>(m) *
                            std::pow(condition_number, -expo));
  }

  Problem p;
  p.kind = ProblemKind::quadratic;
  p.dimension = n;
  p.features = u * singular.asDiagonal() * v.transpose();

  Eigen::VectorXd x_true = gaussian_matrix(n, 1, rng).col(0);
  Eigen::VectorXd noise_vec = gaussian_matrix(m, 1, rng).col(0);
  p.targets = p.features * x_true + noise * noise_vec;

  Eigen::MatrixXd normal = p.features.transpose() * p.features;
  p.known_optimum = normal.llt().solve(p.features.transpose() * p.targets);
  p.known_optimal_loss = loss(p, *p.known_optimum);
  return p;
}

Problem make_logistic(int dimension, int samples, std::uint64_t seed) {
  if (dimension < 1) throw validation_error("make_logistic: dimension < 1");
  if (samples < 1) throw validation_error("make_logistic: samples < 1");

  RngStream rng(seed, kDataStream);
  Problem p;
  p.kind = ProblemKind::logistic;
  p.dimension = dimension;
  p.features = gaussian_matrix(samples, dimension, rng);

  Eigen::VectorXd w_true = gaussian_matrix(dimension, 1, rng).col(0);
  w_true *= 3.0 / w_true.norm();
  p.targets.resize(samples);
  for (int i = 0; i < samples; ++i) {
    double s = p.features.row(i).dot(w_true) + 0.5 * rng.next_gaussian();
    p.targets(i) = s > 0.0 ? 1.0 : 0.0;
  }
  return p;
}

Problem make_mlp(int input_dim, int hidden_width, int samples,
                 std::uint64_t seed) {
  if (input_dim < 1) throw validation_error("make_mlp: input_dim < 1");
  if (hidden_width < 1) throw validation_error("make_mlp: hidden_width < 1");
  if (samples < 1) throw validation_error("make_mlp: samples < 1");

  Problem p = make_logistic(input_dim, samples, seed);
  p.kind = ProblemKind::mlp;
  p.hidden_width = hidden_width;
  p.dimension = hidden_width * (input_dim + 2) + 1;
  return p;
}

Problem make_quadratic_from_data(Eigen::MatrixXd features,
                                 Eigen::VectorXd targets) {
  validate_dataset_shape(features, targets);
  Problem p;
  p.kind = ProblemKind::quadratic;
  p.dimension = static_cast<int>(features.cols());
  p.features = std::move(features);
  p.targets = std::move(targets);
  Eigen::MatrixXd normal = p.features.transpose() * p.features;
  p.known_optimum = normal.llt().solve(p.features.transpose() * p.targets);
  p.known_optimal_loss = loss(p, *p.known_optimum);
  return p;
}

std::vector<DataShard> shard(const Problem& problem, int workers,
                             std::uint64_t seed, double heterogeneity) {
  int m = problem.samples();
  if (workers < 1) throw validation_error("shard: workers < 1");
  if (workers > m) throw validation_error("shard: more workers than samples");
  if (heterogeneity < 0.0 || heterogeneity > 1.0) {
    throw validation_error("shard: heterogeneity outside [0, 1]");
  }

  // Rank rows by target (ties by index) for the label-skew component.
  std::vector<int> by_target(m);
  std::iota(by_target.begin(), by_target.end(), 0);
  std::stable_sort(by_target.begin(), by_target.end(), [&](int a, int b) {
    return problem.targets(a) < problem.targets(b);
  });
  std::vector<double> rank(m);
  for (int pos = 0; pos < m; ++pos) {
    rank[by_target[pos]] = m > 1 ? static_cast<double>(pos) / (m - 1) : 0.0;
  }

  // Priority interpolates uniform shuffle (h = 0) and target order (h = 1).
  RngStream rng(seed, kShardStream);
  std::vector<double> priority(m);
  for (int r = 0; r < m; ++r) {
    priority[r] =
        (1.0 - heterogeneity) * rng.next_double() + heterogeneity * rank[r];
  }
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return priority[a] < priority[b];
  });

  // Contiguous blocks, sizes differing by at most one, larger blocks first.
  std::vector<DataShard> shards(workers);
  int base = m / workers;
  int extra = m % workers;
  int cursor = 0;
  for (int w = 0; w < workers; ++w) {
    int size = base + (w < extra ? 1 : 0);
    shards[w].worker_index = w;
    shards[w].seed = seed;
    shards[w].rows.assign(order.begin() + cursor,
                          order.begin() + cursor + size);
    std::sort(shards[w].rows.begin(), shards[w].rows.end());
    cursor += size;
  }
  return shards;
}

GradSample stochastic_gradient(const Problem& problem, const DataShard& shard,
                               const ParamVector& params, int batch_size,
                               RngStream& rng) {
  int size = static_cast<int>(shard.rows.size());
  if (batch_size < 1) {
    throw validation_error("stochastic_gradient: batch_size < 1");
  }
  if (batch_size > size) {
    throw validation_error("stochastic_gradient: batch_size exceeds shard");
  }
  if (batch_size == size) {
    // Full shard: no sampling, no RNG consumption.
    return accumulate(problem, shard.rows, params);
  }
  // Partial Fisher-Yates, then ascending order for reproducible accumulation.
  std::vector<int> pool = shard.rows;
  std::vector<int> batch(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    int j = i + static_cast<int>(rng.next_below(size - i));
    std::swap(pool[i], pool[j]);
    batch[i] = pool[i];
  }
  std::sort(batch.begin(), batch.end());
  return accumulate(problem, batch, params);
}

GradSample shard_gradient(const Problem& problem, const DataShard& shard,
                          const ParamVector& params) {
  return accumulate(problem, shard.rows, params);
}

ParamVector full_gradient(const Problem& problem, const ParamVector& params) {
  std::vector<int> all(problem.samples());
  std::iota(all.begin(), all.end(), 0);
  return accumulate(problem, all, params).gradient;
}

double loss(const Problem& problem, const ParamVector& params) {
  if (params.size() != problem.dimension) {
    throw validation_error("loss: params dimension mismatch");
  }
  double total = 0.0;
  for (int r = 0; r < problem.samples(); ++r) {
    total += sample_loss(problem, r, params, nullptr);
  }
  double value = total / problem.samples();
  if (!std::isfinite(value)) {
    throw numeric_error("non-finite loss");
  }
  return value;
}

void write_dataset_csv(const Problem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot open for writing: " + path);
  int k = problem.feature_dim();
  for (int j = 0; j < k; ++j) {
    out << 'f' << j << ',';
  }
  out << "target\n";
  char buf[40];
  for (int i = 0; i < problem.samples(); ++i) {
    for (int j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", problem.features(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", problem.targets(i));
    out << buf << '\n';
  }
  if (!out) throw validation_error("write failed: " + path);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> read_dataset_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw validation_error("dataset csv is empty: " + path);
  }
  int columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw validation_error("dataset csv needs >= 2 columns");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        throw validation_error("dataset csv: bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (static_cast<int>(row.size()) != columns) {
      throw validation_error("dataset csv: ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw validation_error("dataset csv has no data rows");

  Eigen::MatrixXd features(rows.size(), columns - 1);
  Eigen::VectorXd targets(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < columns - 1; ++j) {
      features(static_cast<Eigen::Index>(i), j) = rows[i][j];
    }
    targets(static_cast<Eigen::Index>(i)) = rows[i].back();
  }
  return {std::move(features), std::move(targets)};
}

}  // namespace co2sim
