#include "tuned/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include <spdlog/spdlog.h>

#include "tuned/errors.hpp"

namespace tuned::fusion {
namespace {

void check_views(std::span<const Tensor2D> evidence, std::size_t min_views, const char* what) {
  if (evidence.size() < min_views) {
    throw ConfigError(std::string(what) + ": need at least " + std::to_string(min_views) +
                      " views, got " + std::to_string(evidence.size()));
  }
  for (const auto& e : evidence) require_same_shape(e, evidence[0], what);
}

double row_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

Tensor2D normalize_rows(const Tensor2D& weights, const EdgeMask& mask) {
  const std::size_t v = weights.rows();
  Tensor2D out(v, v);
  for (std::size_t i = 0; i < v; ++i) {
    double total = 1.0;
    for (std::size_t j = 0; j < v; ++j)
      if (j != i && mask[i][j]) total += std::max(weights(i, j), 0.0);
    for (std::size_t j = 0; j < v; ++j) {
      if (j == i) out(i, j) = 1.0 / total;
      else if (mask[i][j]) out(i, j) = std::max(weights(i, j), 0.0) / total;
    }
  }
  return out;
}

Tensor2D mix(std::span<const Tensor2D> evidence, const Tensor2D& coefficients) {
  Tensor2D out(evidence[0].rows(), evidence[0].cols());
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto dst = out.row(n);
    for (std::size_t v = 0; v < evidence.size(); ++v) {
      const double c = coefficients(n, v);
      if (c == 0.0) continue;
      auto src = evidence[v].row(n);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += c * src[k];
    }
  }
  return out;
}

Tensor2D broadcast(const std::vector<double>& coeffs, std::size_t rows) {
  Tensor2D c(rows, coeffs.size());
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t v = 0; v < coeffs.size(); ++v) c(n, v) = coeffs[v];
  return c;
}

std::vector<double> dst_coefficients(std::size_t views) {
  std::vector<double> c(views, 0.0);
  c[0] = 1.0;
  for (std::size_t i = 1; i < views; ++i) {
    for (std::size_t j = 0; j < i; ++j) c[j] *= 0.5;
    c[i] = 0.5;
  }
  return c;
}

}  // namespace

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::smrf: return "smrf";
    case Backend::average: return "average";
    case Backend::dst: return "dst";
  }
  return "smrf";
}

Backend backend_from_string(std::string_view name) {
  if (name == "smrf") return Backend::smrf;
  if (name == "average") return Backend::average;
  if (name == "dst") return Backend::dst;
  throw ConfigError("unknown fusion backend '" + std::string(name) + "' (expected smrf, average or dst)");
}

std::string_view to_string(SimilarityScope s) { return s == SimilarityScope::batch ? "batch" : "per_sample"; }

SimilarityScope similarity_scope_from_string(std::string_view name) {
  if (name == "batch") return SimilarityScope::batch;
  if (name == "per_sample") return SimilarityScope::per_sample;
  throw ConfigError("unknown similarity scope '" + std::string(name) + "' (expected batch or per_sample)");
}

std::string_view to_string(Reduction r) { return r == Reduction::target_mean ? "target_mean" : "edge_sum"; }

Reduction reduction_from_string(std::string_view name) {
  if (name == "target_mean") return Reduction::target_mean;
  if (name == "edge_sum") return Reduction::edge_sum;
  throw ConfigError("unknown S-MRF reduction '" + std::string(name) + "' (expected target_mean or edge_sum)");
}

Tensor2D view_similarity(std::span<const Tensor2D> evidence) {
  check_views(evidence, 2, "view_similarity");
  const std::size_t v = evidence.size();
  const std::size_t n = evidence[0].rows();
  Tensor2D w(v, v);
  for (std::size_t i = 0; i < v; ++i) {
    w(i, i) = 1.0;
    for (std::size_t j = i + 1; j < v; ++j) {
      double total = 0.0;
      for (std::size_t r = 0; r < n; ++r) total += row_cosine(evidence[i].row(r), evidence[j].row(r));
      const double mean = n == 0 ? 0.0 : total / static_cast<double>(n);
      w(i, j) = mean;
      w(j, i) = mean;
    }
  }
  return w;
}

EdgeMask prune_edges(const Tensor2D& weights, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("prune_edges: tau must lie in [0, 1]");
  const std::size_t v = weights.rows();
  if (weights.cols() != v) throw ShapeError("prune_edges: weights must be square, got " + weights.shape());
  double w_max = 0.0;
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j)
      if (i != j) w_max = std::max(w_max, std::max(weights(i, j), 0.0));
  const double threshold = tau * w_max;
  EdgeMask mask(v, std::vector<bool>(v, false));
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      mask[i][j] = i == j || std::max(weights(i, j), 0.0) >= threshold;
    }
  }
  return mask;
}

FusionGraph build_fusion_graph(const Tensor2D& similarity, double tau, bool warn_isolated) {
  FusionGraph g;
  g.views = similarity.rows();
  g.tau = tau;
  g.weights = similarity;
  g.edge_mask = prune_edges(similarity, tau);
  g.normalized_weights = normalize_rows(similarity, g.edge_mask);
  for (std::size_t i = 0; i < g.views; ++i) {
    bool linked = false;
    for (std::size_t j = 0; j < g.views; ++j) linked = linked || (j != i && g.edge_mask[i][j]);
    if (!linked) {
      g.isolated_views.push_back(i);
      if (warn_isolated) {
        spdlog::warn("S-MRF: every edge of view {} fell below tau * w_max; it aggregates only itself", i);
      }
    }
  }
  return g;
}

FusionGraph build_fusion_graph(std::span<const Tensor2D> evidence, double tau, bool warn_isolated) {
  return build_fusion_graph(view_similarity(evidence), tau, warn_isolated);
}

std::vector<double> view_coefficients(const FusionGraph& graph, Reduction reduction) {
  const std::size_t v = graph.views;
  std::vector<double> c(v, 0.0);
  if (reduction == Reduction::target_mean) {
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < v; ++j) c[j] += graph.normalized_weights(i, j) / static_cast<double>(v);
    return c;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      if (!graph.edge_mask[i][j]) continue;
      const double w = i == j ? 1.0 : std::max(graph.weights(i, j), 0.0);
      c[j] += w;
      total += w;
    }
  }
  for (double& x : c) x /= total;
  return c;
}

Tensor2D smrf_aggregate(std::span<const Tensor2D> evidence, const FusionGraph& graph, Reduction reduction) {
  check_views(evidence, 1, "smrf_aggregate");
  if (evidence.size() != graph.views) {
    throw ShapeError("smrf_aggregate: graph has " + std::to_string(graph.views) + " views, evidence " +
                     std::to_string(evidence.size()));
  }
  return mix(evidence, broadcast(view_coefficients(graph, reduction), evidence[0].rows()));
}

Tensor2D average_fuse(std::span<const Tensor2D> evidence) {
  check_views(evidence, 1, "average_fuse");
  return mix(evidence, broadcast(std::vector<double>(evidence.size(), 1.0 / evidence.size()), evidence[0].rows()));
}

Tensor2D dst_sequential_fuse(std::span<const Tensor2D> evidence) {
  check_views(evidence, 1, "dst_sequential_fuse");
  Tensor2D acc = evidence[0];
  for (std::size_t i = 1; i < evidence.size(); ++i) {
    acc += evidence[i];
    acc *= 0.5;
  }
  return acc;
}

FusionResult fuse(Backend backend, std::span<const Tensor2D> evidence, const FusionOptions& options) {
  check_views(evidence, 1, "fuse");
  const std::size_t v = evidence.size();
  const std::size_t n = evidence[0].rows();
  FusionResult result;
  switch (backend) {
    case Backend::average:
      result.coefficients = broadcast(std::vector<double>(v, 1.0 / v), n);
      result.evidence = average_fuse(evidence);
      return result;
    case Backend::dst:
      result.coefficients = broadcast(dst_coefficients(v), n);
      result.evidence = dst_sequential_fuse(evidence);
      return result;
    case Backend::smrf:
      break;
  }
  if (v < 2) {
    result.coefficients = broadcast({1.0}, n);
    result.evidence = evidence[0];
    return result;
  }
  result.graph = build_fusion_graph(evidence, options.tau, options.warn_isolated);
  if (options.scope == SimilarityScope::batch) {
    result.coefficients = broadcast(view_coefficients(*result.graph, options.reduction), n);
  } else {
    result.coefficients = Tensor2D(n, v);
    Tensor2D sim(v, v);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < v; ++i) {
        sim(i, i) = 1.0;
        for (std::size_t j = i + 1; j < v; ++j) {
          const double c = row_cosine(evidence[i].row(r), evidence[j].row(r));
          sim(i, j) = c;
          sim(j, i) = c;
        }
      }
      const auto coeffs = view_coefficients(build_fusion_graph(sim, options.tau), options.reduction);
      for (std::size_t j = 0; j < v; ++j) result.coefficients(r, j) = coeffs[j];
    }
  }
  result.evidence = mix(evidence, result.coefficients);
  return result;
}

void write_graph_csv(std::ostream& out, const FusionGraph& graph) {
  out << "i,j,weight,retained,normalized\n";
  out.precision(17);
  for (std::size_t i = 0; i < graph.views; ++i) {
    for (std::size_t j = 0; j < graph.views; ++j) {
      out << i << ',' << j << ',' << graph.weights(i, j) << ',' << (graph.edge_mask[i][j] ? 1 : 0) << ','
          << graph.normalized_weights(i, j) << '\n';
    }
  }
}

}  // namespace tuned::fusion
