#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tuned/tensor.hpp"

namespace tuned::fusion {

using EdgeMask = std::vector<std::vector<bool>>;

/// View-level graph of the selective MRF.
///   weights             V x V clamped cosine similarity, diagonal 1
///   edge_mask[i][j]     w_ij >= tau * w_max (w_max = largest off-diagonal weight); diagonal always set
///   normalized_weights  retained weights with a self-edge of weight 1, rows summing to 1
struct FusionGraph {
  std::size_t views = 0;
  double tau = 0.7;
  Tensor2D weights;
  EdgeMask edge_mask;
  Tensor2D normalized_weights;
  /// Views whose off-diagonal edges were all pruned; they aggregate only themselves.
  std::vector<std::size_t> isolated_views;
};

enum class Backend { smrf, average, dst };
/// batch: one graph from batch-mean similarities. per_sample: one graph per row.
enum class SimilarityScope { batch, per_sample };
/// How the per-target rows of normalized_weights collapse into one output.
///   target_mean  uniform mean over target views of their normalized rows
///   edge_sum     sum of retained edge weights into each view, normalized over all edges
enum class Reduction { target_mean, edge_sum };

std::string_view to_string(Backend b);
Backend backend_from_string(std::string_view name);
std::string_view to_string(SimilarityScope s);
SimilarityScope similarity_scope_from_string(std::string_view name);
std::string_view to_string(Reduction r);
Reduction reduction_from_string(std::string_view name);

/// w_ij = mean over samples of cos(ẽ_n^i, ẽ_n^j); zero-norm rows count as 0.
Tensor2D view_similarity(std::span<const Tensor2D> evidence);

/// Off-diagonal edge kept iff max(w_ij, 0) >= tau * w_max. Self-edges always kept.
EdgeMask prune_edges(const Tensor2D& weights, double tau);

/// Similarity -> pruning -> row normalization. Logs a warning for isolated
/// views when `warn_isolated` is set.
FusionGraph build_fusion_graph(const Tensor2D& similarity, double tau, bool warn_isolated = false);
FusionGraph build_fusion_graph(std::span<const Tensor2D> evidence, double tau, bool warn_isolated = false);

/// Per-view mixing coefficients implied by a graph (nonnegative, summing to 1).
std::vector<double> view_coefficients(const FusionGraph& graph, Reduction reduction);

/// Ẽ_agg = sum_j c_j ẽ^j with c from view_coefficients.
Tensor2D smrf_aggregate(std::span<const Tensor2D> evidence, const FusionGraph& graph,
                        Reduction reduction = Reduction::target_mean);

/// Elementwise mean over views.
Tensor2D average_fuse(std::span<const Tensor2D> evidence);

/// acc = e1; acc = (e_i + acc) / 2 for i = 2..V. Order-dependent.
Tensor2D dst_sequential_fuse(std::span<const Tensor2D> evidence);

struct FusionOptions {
  double tau = 0.7;
  SimilarityScope scope = SimilarityScope::batch;
  Reduction reduction = Reduction::target_mean;
  bool warn_isolated = false;
};

/// Fused evidence plus the per-row view coefficients (n x V) that produced
/// it, so callers can backpropagate: d ẽ^v = coefficients[:, v] * d Ẽ_agg.
struct FusionResult {
  Tensor2D evidence;
  Tensor2D coefficients;
  std::optional<FusionGraph> graph;
};

FusionResult fuse(Backend backend, std::span<const Tensor2D> evidence, const FusionOptions& options = {});

/// `i,j,weight,retained,normalized` rows for the V x V graph.
void write_graph_csv(std::ostream& out, const FusionGraph& graph);

}  // namespace tuned::fusion
