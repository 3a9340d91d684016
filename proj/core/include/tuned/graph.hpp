#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "tuned/dense.hpp"
#include "tuned/parameter.hpp"
#include "tuned/tensor.hpp"

namespace tuned::graph {

/// Squared Euclidean distances between all rows of `features` (n >= 2).
/// Symmetric with an exactly zero diagonal; round-off negatives clamp to 0.
Tensor2D pairwise_sq_dist(const Tensor2D& features);

/// Squared distances from each query row to each reference row.
Tensor2D cross_sq_dist(const Tensor2D& queries, const Tensor2D& reference);

/// Nonnegative n x n sample-affinity matrix.
struct AdjacencyMatrix {
  Tensor2D weights;

  std::size_t n() const noexcept { return weights.rows(); }
  bool operator==(const AdjacencyMatrix&) const = default;
};

/// Adaptive-neighbor weights. Row i is supported on its k nearest neighbours
/// N_i (ties broken by index) with
///   M_ij = max(0, (phi_i - D_ij) / (k phi_i - sum_{l in N_i} D_il)),
/// where phi_i is the distance to the (k+1)-th nearest neighbour, so every row
/// sums to one. A vanishing denominator falls back to uniform 1/k weights.
/// Requires 1 <= k <= n - 2.
AdjacencyMatrix can_weights(const Tensor2D& dist, std::size_t k);

/// (M + Mᵀ) / 2, exactly symmetric.
AdjacencyMatrix symmetrize(const AdjacencyMatrix& adj);

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
Tensor2D normalize_adj(const AdjacencyMatrix& adj);

/// Degrees of A + I.
std::vector<double> self_loop_degrees(const AdjacencyMatrix& adj);

/// Compressed sparse row matrix, used for the normalized adjacency during training.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  static SparseMatrix from_dense(const Tensor2D& dense);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  /// Appends the next row; rows must be pushed in order.
  void push_row(const std::vector<std::pair<std::size_t, double>>& entries);

  Tensor2D multiply(const Tensor2D& dense) const;
  /// thisᵀ * dense
  Tensor2D multiply_transposed(const Tensor2D& dense) const;
  Tensor2D to_dense() const;

  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& col_index() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t filled_rows_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Fixed per-view sample graph built from the training rows.
struct NeighborGraph {
  std::size_t k = 0;
  AdjacencyMatrix adjacency;  // symmetrized A
  SparseMatrix normalized;    // Â
  std::vector<double> degrees;
};

/// pairwise distances -> CAN weights -> symmetrize -> normalize.
NeighborGraph build_neighbor_graph(const Tensor2D& features, std::size_t k);

/// Normalized adjacency rows for samples outside the training graph. Query t
/// links to its k nearest training rows with CAN weights m_tj (degree 2 with
/// its self-loop); column layout is [train rows..., query rows...].
SparseMatrix attach_queries(const Tensor2D& train_features, const Tensor2D& queries,
                            const std::vector<double>& train_degrees, std::size_t k);

/// Writes `row,col,weight` lines for every nonzero entry.
void write_adjacency_csv(std::ostream& out, const AdjacencyMatrix& adj);

struct GcnGradients {
  Tensor2D features;
  Tensor2D weights;
};

/// Graph convolution Q' = act(Â Q W). Â is treated as a constant.
class GcnLayer {
 public:
  GcnLayer() = default;
  GcnLayer(std::size_t in_dim, std::size_t out_dim, nn::Activation activation);
  GcnLayer(Tensor2D weights, nn::Activation activation);

  void initialize(nn::Rng& rng);

  std::size_t in_dim() const noexcept { return weights_.value.rows(); }
  std::size_t out_dim() const noexcept { return weights_.value.cols(); }
  nn::Activation activation() const noexcept { return activation_; }
  const Tensor2D& weights() const noexcept { return weights_.value; }
  Tensor2D& weights() noexcept { return weights_.value; }

  Tensor2D forward(const SparseMatrix& adj_norm, const Tensor2D& features);
  Tensor2D forward(const Tensor2D& adj_norm, const Tensor2D& features);
  Tensor2D infer(const SparseMatrix& adj_norm, const Tensor2D& features) const;
  GcnGradients backward(const Tensor2D& upstream);

  void collect(nn::ParameterList& out) { out.push_back(&weights_); }
  void zero_grad() { weights_.zero_grad(); }
  void clear_cache();

 private:
  void check(const SparseMatrix& adj_norm, const Tensor2D& features) const;

  nn::Parameter weights_;
  nn::Activation activation_ = nn::Activation::identity;
  std::optional<SparseMatrix> cached_adj_;
  std::optional<Tensor2D> cached_features_;
  std::optional<Tensor2D> cached_pre_;
};

/// Convenience wrapper matching the dense-adjacency formulation.
Tensor2D gcn_forward(GcnLayer& layer, const Tensor2D& adj_norm, const Tensor2D& features);

}  // namespace tuned::graph
