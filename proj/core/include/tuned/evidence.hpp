#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tuned/dense.hpp"
#include "tuned/parameter.hpp"
#include "tuned/rng.hpp"
#include "tuned/tensor.hpp"

namespace tuned::evidence {

/// Subjective-logic opinion derived from a Dirichlet: beliefs plus an
/// uncertainty mass, summing to one.
struct Opinion {
  std::vector<double> belief;
  double uncertainty = 1.0;
};

/// alpha = e + 1, S = sum(alpha), b_k = e_k / S, u = K / S.
Opinion evidence_to_opinion(std::span<const double> evidence);
/// As above, checking that the row has `num_classes` entries.
Opinion evidence_to_opinion(std::span<const double> evidence, std::size_t num_classes);

/// Per-row uncertainty K / S of an evidence matrix.
std::vector<double> uncertainty(const Tensor2D& evidence);
/// Expected class probabilities alpha / S per row.
Tensor2D expected_probability(const Tensor2D& evidence);

/// ln Dir(p | alpha) for p strictly inside the simplex.
double dirichlet_log_pdf(std::span<const double> p, std::span<const double> alpha);

enum class FusionKind { summation, linear_weighted, cross_attention };

std::string_view to_string(FusionKind kind);
FusionKind fusion_kind_from_string(std::string_view name);

/// Snapshot of a fusion function's settings.
/// linear_weighted uses (lambda1, lambda2) with lambda1 + lambda2 = 1.
/// cross_attention optionally carries query/key projections (identity when empty).
struct FusionVariant {
  FusionKind kind = FusionKind::summation;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  Tensor2D query_projection;
  Tensor2D key_projection;
};

/// How the consensus term enters the view evidence.
/// literal:  ẽ = e + Φ(e◇, e)
/// absorbed: ẽ = Φ(e◇, e) when Φ already contains e (summation, linear_weighted)
enum class ConditioningForm { literal, absorbed };

std::string_view to_string(ConditioningForm form);
ConditioningForm conditioning_form_from_string(std::string_view name);

/// Scaled dot-product attention over the rows of a batch:
/// softmax(q kᵀ / sqrt(key_dim)) v, softmax taken per row.
struct AttentionCache {
  Tensor2D query;
  Tensor2D key;
  Tensor2D value;
  Tensor2D weights;  // row-stochastic n x n
};

struct AttentionGradients {
  Tensor2D query;
  Tensor2D key;
  Tensor2D value;
};

Tensor2D attention_forward(const Tensor2D& query, const Tensor2D& key, const Tensor2D& value,
                           AttentionCache* cache = nullptr);
AttentionGradients attention_backward(const AttentionCache& cache, const Tensor2D& upstream);

/// Ψ(h, q): feature/neighbourhood aggregation.
Tensor2D psi_fuse(const FusionVariant& variant, const Tensor2D& features, const Tensor2D& neighborhood);

/// Φ(e◇, e) alone.
Tensor2D phi_term(const FusionVariant& variant, const Tensor2D& consensus, const Tensor2D& view);
/// Conditioned view evidence ẽ.
Tensor2D phi_fuse(const FusionVariant& variant, const Tensor2D& consensus, const Tensor2D& view,
                  ConditioningForm form = ConditioningForm::literal);

struct PairGradients {
  Tensor2D first;
  Tensor2D second;
};

/// Trainable Ψ. Linear weights are projected back onto
/// {lambda1 + lambda2 = 1, lambda >= 0} by project().
class FeatureNeighborFusion {
 public:
  FeatureNeighborFusion() = default;
  explicit FeatureNeighborFusion(FusionKind kind);

  FusionKind kind() const noexcept { return kind_; }
  FusionVariant variant() const;
  void set_lambdas(double lambda1, double lambda2);

  Tensor2D forward(const Tensor2D& features, const Tensor2D& neighborhood);
  Tensor2D infer(const Tensor2D& features, const Tensor2D& neighborhood) const;
  /// first = d/d features, second = d/d neighbourhood.
  PairGradients backward(const Tensor2D& upstream);

  void project();
  void collect(nn::ParameterList& out);
  void zero_grad();
  const nn::Parameter& lambdas() const noexcept { return lambdas_; }

 private:
  FusionKind kind_ = FusionKind::summation;
  nn::Parameter lambdas_{Tensor2D{{0.5, 0.5}}};
  std::optional<Tensor2D> cached_features_;
  std::optional<Tensor2D> cached_neighborhood_;
  std::optional<AttentionCache> cached_attention_;
};

/// Trainable Φ producing the conditioned evidence ẽ. For cross_attention the
/// query/key projections W_Q, W_K (K x K, identity at start) are learned and
/// the value path is the consensus evidence itself, which keeps ẽ >= 0.
class ConsensusConditioner {
 public:
  ConsensusConditioner() = default;
  ConsensusConditioner(FusionKind kind, std::size_t num_classes,
                       ConditioningForm form = ConditioningForm::literal);

  FusionKind kind() const noexcept { return kind_; }
  ConditioningForm form() const noexcept { return form_; }
  FusionVariant variant() const;
  void set_lambdas(double lambda1, double lambda2);
  void set_projections(Tensor2D query, Tensor2D key);

  Tensor2D forward(const Tensor2D& consensus, const Tensor2D& view);
  Tensor2D infer(const Tensor2D& consensus, const Tensor2D& view) const;
  /// first = d/d consensus, second = d/d view evidence.
  PairGradients backward(const Tensor2D& upstream);

  void project();
  void collect(nn::ParameterList& out);
  void zero_grad();
  const nn::Parameter& lambdas() const noexcept { return lambdas_; }
  const nn::Parameter& query_projection() const noexcept { return query_proj_; }
  const nn::Parameter& key_projection() const noexcept { return key_proj_; }

 private:
  FusionKind kind_ = FusionKind::summation;
  ConditioningForm form_ = ConditioningForm::literal;
  nn::Parameter lambdas_{Tensor2D{{0.5, 0.5}}};
  nn::Parameter query_proj_;
  nn::Parameter key_proj_;
  std::optional<Tensor2D> cached_consensus_;
  std::optional<Tensor2D> cached_view_;
  std::optional<AttentionCache> cached_attention_;
};

/// Dense head producing nonnegative evidence. Rejects identity activation.
nn::DenseLayer make_evidence_head(std::size_t in_dim, std::size_t num_classes, nn::Activation activation);
Tensor2D evidence_head(const Tensor2D& fused, const nn::DenseLayer& head);

enum class ConsensusMode { mean, sample };

std::string_view to_string(ConsensusMode mode);
ConsensusMode consensus_mode_from_string(std::string_view name);

/// Shared extractor mapping the view-averaged representation to α◇ = softplus(·) + 1.
class ConsensusExtractor {
 public:
  ConsensusExtractor() = default;
  ConsensusExtractor(std::size_t in_dim, std::size_t num_classes);

  void initialize(nn::Rng& rng) { layer_.initialize(rng); }
  nn::DenseLayer& layer() noexcept { return layer_; }
  const nn::DenseLayer& layer() const noexcept { return layer_; }
  std::size_t num_classes() const noexcept { return layer_.out_dim(); }

  /// α◇ for each row of the mean-pooled views (no caching).
  Tensor2D alpha(std::span<const Tensor2D> view_features) const;

  /// e◇. `mean` returns α◇ − 1 and supports backward(); `sample` draws
  /// p ~ Dir(α◇) and returns p (Σα◇ − K), which is treated as a constant.
  Tensor2D forward(std::span<const Tensor2D> view_features, nn::Rng& rng, ConsensusMode mode);
  Tensor2D infer(std::span<const Tensor2D> view_features, nn::Rng& rng, ConsensusMode mode) const;
  /// Gradient for each view's features, (1/V) of the pooled gradient each.
  std::vector<Tensor2D> backward(const Tensor2D& upstream);

  void collect(nn::ParameterList& out) { layer_.collect(out); }
  void zero_grad() { layer_.zero_grad(); }

 private:
  nn::DenseLayer layer_;
  std::size_t cached_views_ = 0;
  std::optional<ConsensusMode> cached_mode_;
};

/// Mean over views; all views must share the row count.
Tensor2D mean_pool(std::span<const Tensor2D> views);

/// Free-function form of ConsensusExtractor::infer.
Tensor2D consensus_evidence(const ConsensusExtractor& extractor, std::span<const Tensor2D> view_features,
                            nn::Rng& rng, ConsensusMode mode);

/// Draw from Dir(alpha) by normalising independent Gamma(alpha_k, 1) variates.
std::vector<double> sample_dirichlet(std::span<const double> alpha, nn::Rng& rng);

}  // namespace tuned::evidence
