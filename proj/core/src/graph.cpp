#include "tuned/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "tuned/errors.hpp"

namespace tuned::graph {
namespace {

std::vector<double> row_norms_sq(const Tensor2D& x) {
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    out[i] = s;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

using Candidate = std::pair<double, std::size_t>;  // (distance, index)

/// CAN weights for one sample given its candidate neighbours (self excluded).
/// Requires candidates.size() >= k + 1.
std::vector<std::pair<std::size_t, double>> can_row(std::vector<Candidate>& candidates,
                                                    std::size_t k) {
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k + 1),
                    candidates.end());
  const double phi = candidates[k].first;
  double neighbour_sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) neighbour_sum += candidates[j].first;
  const double denom = static_cast<double>(k) * phi - neighbour_sum;
  const double scale = std::max(static_cast<double>(k) * phi, 1e-300);

  std::vector<std::pair<std::size_t, double>> row;
  row.reserve(k);
  if (!(denom > 1e-12 * scale)) {
    for (std::size_t j = 0; j < k; ++j) row.emplace_back(candidates[j].second, 1.0 / k);
  } else {
    for (std::size_t j = 0; j < k; ++j) {
      row.emplace_back(candidates[j].second, std::max(0.0, (phi - candidates[j].first) / denom));
    }
  }
  std::sort(row.begin(), row.end());
  return row;
}

}  // namespace

Tensor2D pairwise_sq_dist(const Tensor2D& features) {
  const std::size_t n = features.rows();
  if (n < 2) throw InputError("pairwise_sq_dist: need at least 2 samples, got " + std::to_string(n));
  const auto norms = row_norms_sq(features);
  Tensor2D d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max(0.0, norms[i] + norms[j] - 2.0 * dot(features.row(i), features.row(j)));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Tensor2D cross_sq_dist(const Tensor2D& queries, const Tensor2D& reference) {
  if (queries.cols() != reference.cols()) {
    throw ShapeError("cross_sq_dist: feature dims differ " + queries.shape() + " vs " +
                     reference.shape());
  }
  const auto qn = row_norms_sq(queries);
  const auto rn = row_norms_sq(reference);
  Tensor2D d(queries.rows(), reference.rows());
  for (std::size_t i = 0; i < queries.rows(); ++i)
    for (std::size_t j = 0; j < reference.rows(); ++j)
      d(i, j) = std::max(0.0, qn[i] + rn[j] - 2.0 * dot(queries.row(i), reference.row(j)));
  return d;
}

AdjacencyMatrix can_weights(const Tensor2D& dist, std::size_t k) {
  const std::size_t n = dist.rows();
  if (dist.cols() != n) throw ShapeError("can_weights: distance matrix must be square, got " + dist.shape());
  if (k < 1 || n < 3 || k > n - 2) {
    throw ConfigError("can_weights: k = " + std::to_string(k) + " outside [1, n - 2] for n = " +
                      std::to_string(n));
  }
  AdjacencyMatrix m{Tensor2D(n, n)};
  std::vector<Candidate> candidates;
  candidates.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) candidates.emplace_back(dist(i, j), j);
    for (const auto& [j, w] : can_row(candidates, k)) m.weights(i, j) = w;
  }
  return m;
}

AdjacencyMatrix symmetrize(const AdjacencyMatrix& adj) {
  const std::size_t n = adj.n();
  if (adj.weights.cols() != n) throw ShapeError("symmetrize: matrix must be square, got " + adj.weights.shape());
  AdjacencyMatrix a{Tensor2D(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = (adj.weights(i, j) + adj.weights(j, i)) / 2.0;
      a.weights(i, j) = v;
      a.weights(j, i) = v;
    }
  }
  return a;
}

std::vector<double> self_loop_degrees(const AdjacencyMatrix& adj) {
  std::vector<double> deg(adj.n(), 1.0);
  for (std::size_t i = 0; i < adj.n(); ++i)
    for (double v : adj.weights.row(i)) deg[i] += v;
  return deg;
}

Tensor2D normalize_adj(const AdjacencyMatrix& adj) {
  const std::size_t n = adj.n();
  if (adj.weights.cols() != n) throw ShapeError("normalize_adj: matrix must be square, got " + adj.weights.shape());
  const auto deg = self_loop_degrees(adj);
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
  Tensor2D out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adj.weights(i, j) + (i == j ? 1.0 : 0.0);
      if (a != 0.0) out(i, j) = a * (inv_sqrt[i] * inv_sqrt[j]);
    }
  }
  return out;
}

SparseMatrix SparseMatrix::from_dense(const Tensor2D& dense) {
  SparseMatrix s(dense.rows(), dense.cols());
  std::vector<std::pair<std::size_t, double>> entries;
  for (std::size_t i = 0; i < dense.rows(); ++i) {
    entries.clear();
    for (std::size_t j = 0; j < dense.cols(); ++j)
      if (dense(i, j) != 0.0) entries.emplace_back(j, dense(i, j));
    s.push_row(entries);
  }
  return s;
}

void SparseMatrix::push_row(const std::vector<std::pair<std::size_t, double>>& entries) {
  if (filled_rows_ >= rows_) throw ShapeError("SparseMatrix::push_row: matrix already full");
  for (const auto& [col, value] : entries) {
    if (col >= cols_) throw ShapeError("SparseMatrix::push_row: column out of range");
    col_idx_.push_back(col);
    values_.push_back(value);
  }
  ++filled_rows_;
  row_ptr_[filled_rows_] = values_.size();
}

Tensor2D SparseMatrix::multiply(const Tensor2D& dense) const {
  if (dense.rows() != cols_) {
    throw ShapeError("SparseMatrix::multiply: " + shape_string(rows_, cols_) + " * " + dense.shape());
  }
  const std::size_t p = dense.cols();
  Tensor2D out(rows_, p);
  for (std::size_t i = 0; i < rows_; ++i) {
    double* o = out.data() + i * p;
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
      const double w = values_[e];
      const double* src = dense.data() + col_idx_[e] * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += w * src[j];
    }
  }
  return out;
}

Tensor2D SparseMatrix::multiply_transposed(const Tensor2D& dense) const {
  if (dense.rows() != rows_) {
    throw ShapeError("SparseMatrix::multiply_transposed: " + shape_string(rows_, cols_) + "ᵀ * " +
                     dense.shape());
  }
  const std::size_t p = dense.cols();
  Tensor2D out(cols_, p);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* src = dense.data() + i * p;
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
      const double w = values_[e];
      double* o = out.data() + col_idx_[e] * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += w * src[j];
    }
  }
  return out;
}

Tensor2D SparseMatrix::to_dense() const {
  Tensor2D out(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) out(i, col_idx_[e]) = values_[e];
  return out;
}

NeighborGraph build_neighbor_graph(const Tensor2D& features, std::size_t k) {
  NeighborGraph g;
  g.k = k;
  g.adjacency = symmetrize(can_weights(pairwise_sq_dist(features), k));
  g.degrees = self_loop_degrees(g.adjacency);
  g.normalized = SparseMatrix::from_dense(normalize_adj(g.adjacency));
  return g;
}

SparseMatrix attach_queries(const Tensor2D& train_features, const Tensor2D& queries,
                            const std::vector<double>& train_degrees, std::size_t k) {
  const std::size_t n_train = train_features.rows();
  if (train_degrees.size() != n_train) {
    throw ShapeError("attach_queries: " + std::to_string(train_degrees.size()) +
                     " degrees for " + std::to_string(n_train) + " training rows");
  }
  if (k < 1 || k + 1 > n_train) {
    throw ConfigError("attach_queries: k = " + std::to_string(k) + " needs at least k + 1 training rows");
  }
  const Tensor2D dist = cross_sq_dist(queries, train_features);
  SparseMatrix out(queries.rows(), n_train + queries.rows());
  std::vector<Candidate> candidates;
  candidates.reserve(n_train);
  // A query's own degree is 1 (self-loop) + 1 (its CAN row sums to one).
  constexpr double query_degree = 2.0;
  for (std::size_t t = 0; t < queries.rows(); ++t) {
    candidates.clear();
    for (std::size_t j = 0; j < n_train; ++j) candidates.emplace_back(dist(t, j), j);
    auto row = can_row(candidates, k);
    std::vector<std::pair<std::size_t, double>> entries;
    entries.reserve(row.size() + 1);
    for (const auto& [j, m] : row) {
      if (m > 0.0) entries.emplace_back(j, m / std::sqrt(query_degree * train_degrees[j]));
    }
    entries.emplace_back(n_train + t, 1.0 / query_degree);
    out.push_row(entries);
  }
  return out;
}

void write_adjacency_csv(std::ostream& out, const AdjacencyMatrix& adj) {
  out << "row,col,weight\n";
  out.precision(17);
  for (std::size_t i = 0; i < adj.n(); ++i)
    for (std::size_t j = 0; j < adj.weights.cols(); ++j)
      if (adj.weights(i, j) != 0.0) out << i << ',' << j << ',' << adj.weights(i, j) << '\n';
}

GcnLayer::GcnLayer(std::size_t in_dim, std::size_t out_dim, nn::Activation activation)
    : weights_(Tensor2D(in_dim, out_dim)), activation_(activation) {}

GcnLayer::GcnLayer(Tensor2D weights, nn::Activation activation)
    : weights_(std::move(weights)), activation_(activation) {}

void GcnLayer::initialize(nn::Rng& rng) {
  const double fan_in = static_cast<double>(std::max<std::size_t>(in_dim(), 1));
  const double fan_out = static_cast<double>(std::max<std::size_t>(out_dim(), 1));
  const double stddev = activation_ == nn::Activation::relu ? std::sqrt(2.0 / fan_in)
                                                             : std::sqrt(2.0 / (fan_in + fan_out));
  for (double& w : weights_.value.values()) w = rng.normal(0.0, stddev);
}

void GcnLayer::check(const SparseMatrix& adj_norm, const Tensor2D& features) const {
  if (adj_norm.cols() != features.rows()) {
    throw ShapeError("GcnLayer: adjacency " + shape_string(adj_norm.rows(), adj_norm.cols()) +
                     " incompatible with features " + features.shape());
  }
  if (features.cols() != in_dim()) {
    throw ShapeError("GcnLayer: features " + features.shape() + " incompatible with weights " +
                     weights_.value.shape());
  }
}

Tensor2D GcnLayer::infer(const SparseMatrix& adj_norm, const Tensor2D& features) const {
  check(adj_norm, features);
  return nn::activate(activation_, adj_norm.multiply(matmul(features, weights_.value)));
}

Tensor2D GcnLayer::forward(const SparseMatrix& adj_norm, const Tensor2D& features) {
  check(adj_norm, features);
  Tensor2D pre = adj_norm.multiply(matmul(features, weights_.value));
  Tensor2D out = nn::activate(activation_, pre);
  cached_adj_ = adj_norm;
  cached_features_ = features;
  cached_pre_ = std::move(pre);
  return out;
}

Tensor2D GcnLayer::forward(const Tensor2D& adj_norm, const Tensor2D& features) {
  if (adj_norm.rows() != adj_norm.cols()) {
    throw ShapeError("GcnLayer: adjacency must be square, got " + adj_norm.shape());
  }
  return forward(SparseMatrix::from_dense(adj_norm), features);
}

GcnGradients GcnLayer::backward(const Tensor2D& upstream) {
  if (!cached_pre_) throw StateError("GcnLayer::backward called before forward");
  require_same_shape(upstream, *cached_pre_, "GcnLayer::backward");
  const Tensor2D delta = nn::activation_backward(activation_, *cached_pre_, upstream);
  const Tensor2D d_projected = cached_adj_->multiply_transposed(delta);
  GcnGradients g;
  g.weights = matmul_tn(*cached_features_, d_projected);
  g.features = matmul_nt(d_projected, weights_.value);
  weights_.grad += g.weights;
  return g;
}

void GcnLayer::clear_cache() {
  cached_adj_.reset();
  cached_features_.reset();
  cached_pre_.reset();
}

Tensor2D gcn_forward(GcnLayer& layer, const Tensor2D& adj_norm, const Tensor2D& features) {
  return layer.forward(adj_norm, features);
}

}  // namespace tuned::graph
