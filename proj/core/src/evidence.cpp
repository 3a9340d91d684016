#include "tuned/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "tuned/errors.hpp"
#include "tuned/special.hpp"

namespace tuned::evidence {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajor>;
using ConstRowMajorMap = Eigen::Map<const RowMajor>;

void require_nonnegative(std::span<const double> e) {
  for (double v : e) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ContractError("evidence must be finite and nonnegative, got " + std::to_string(v));
    }
  }
}

Tensor2D projection_or_identity(const Tensor2D& proj, std::size_t dim) {
  return proj.empty() ? Tensor2D::identity(dim) : proj;
}

void project_lambdas(Tensor2D& lambdas) {
  const double l1 = std::clamp((lambdas(0, 0) - lambdas(0, 1) + 1.0) / 2.0, 0.0, 1.0);
  lambdas(0, 0) = l1;
  lambdas(0, 1) = 1.0 - l1;
}

double dot_all(const Tensor2D& a, const Tensor2D& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

Opinion evidence_to_opinion(std::span<const double> evidence) {
  require_nonnegative(evidence);
  const double k = static_cast<double>(evidence.size());
  double strength = k;
  for (double e : evidence) strength += e;
  Opinion op;
  op.belief.reserve(evidence.size());
  for (double e : evidence) op.belief.push_back(e / strength);
  op.uncertainty = k / strength;
  return op;
}

Opinion evidence_to_opinion(std::span<const double> evidence, std::size_t num_classes) {
  if (evidence.size() != num_classes) {
    throw ShapeError("evidence_to_opinion: evidence has " + std::to_string(evidence.size()) +
                     " entries, expected " + std::to_string(num_classes));
  }
  return evidence_to_opinion(evidence);
}

std::vector<double> uncertainty(const Tensor2D& evidence) {
  std::vector<double> out(evidence.rows());
  const double k = static_cast<double>(evidence.cols());
  for (std::size_t i = 0; i < evidence.rows(); ++i) {
    double s = k;
    for (double e : evidence.row(i)) s += e;
    out[i] = k / s;
  }
  return out;
}

Tensor2D expected_probability(const Tensor2D& evidence) {
  Tensor2D p(evidence.rows(), evidence.cols());
  const double k = static_cast<double>(evidence.cols());
  for (std::size_t i = 0; i < evidence.rows(); ++i) {
    double s = k;
    for (double e : evidence.row(i)) s += e;
    for (std::size_t j = 0; j < evidence.cols(); ++j) p(i, j) = (evidence(i, j) + 1.0) / s;
  }
  return p;
}

double dirichlet_log_pdf(std::span<const double> p, std::span<const double> alpha) {
  if (p.size() != alpha.size() || p.empty()) {
    throw ShapeError("dirichlet_log_pdf: point has " + std::to_string(p.size()) +
                     " coordinates, alpha has " + std::to_string(alpha.size()));
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v > 0.0)) throw DomainError("dirichlet_log_pdf: point is not in the open simplex");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("dirichlet_log_pdf: coordinates sum to " + std::to_string(total) + ", not 1");
  }
  double log_kernel = 0.0;
  double log_beta = 0.0;
  double alpha_sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(alpha[k] > 0.0)) throw DomainError("dirichlet_log_pdf: alpha must be positive");
    log_kernel += (alpha[k] - 1.0) * std::log(p[k]);
    log_beta += nn::lgamma(alpha[k]);
    alpha_sum += alpha[k];
  }
  log_beta -= nn::lgamma(alpha_sum);
  return log_kernel - log_beta;
}

std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::summation: return "summation";
    case FusionKind::linear_weighted: return "linear_weighted";
    case FusionKind::cross_attention: return "cross_attention";
  }
  return "summation";
}

FusionKind fusion_kind_from_string(std::string_view name) {
  if (name == "summation") return FusionKind::summation;
  if (name == "linear_weighted") return FusionKind::linear_weighted;
  if (name == "cross_attention") return FusionKind::cross_attention;
  throw ConfigError("unknown fusion variant '" + std::string(name) +
                    "' (expected summation, linear_weighted or cross_attention)");
}

std::string_view to_string(ConditioningForm form) {
  return form == ConditioningForm::literal ? "literal" : "absorbed";
}

ConditioningForm conditioning_form_from_string(std::string_view name) {
  if (name == "literal") return ConditioningForm::literal;
  if (name == "absorbed") return ConditioningForm::absorbed;
  throw ConfigError("unknown conditioning form '" + std::string(name) + "' (expected literal or absorbed)");
}

Tensor2D attention_forward(const Tensor2D& query, const Tensor2D& key, const Tensor2D& value,
                           AttentionCache* cache) {
  if (query.cols() != key.cols()) {
    throw ShapeError("attention: query " + query.shape() + " and key " + key.shape() + " dims differ");
  }
  if (key.rows() != value.rows()) {
    throw ShapeError("attention: key " + key.shape() + " and value " + value.shape() + " rows differ");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(key.cols(), 1)));
  Tensor2D weights = matmul_nt(query, key);
  RowMajorMap w(weights.data(), static_cast<Eigen::Index>(weights.rows()), static_cast<Eigen::Index>(weights.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    auto row = w.row(i).array();
    row = ((row - row.maxCoeff()) * scale).exp();
    row /= row.sum();
  }
  Tensor2D out = matmul(weights, value);
  if (cache) {
    cache->query = query;
    cache->key = key;
    cache->value = value;
    cache->weights = std::move(weights);
  }
  return out;
}

AttentionGradients attention_backward(const AttentionCache& cache, const Tensor2D& upstream) {
  const Tensor2D& p = cache.weights;
  if (upstream.rows() != p.rows() || upstream.cols() != cache.value.cols()) {
    throw ShapeError("attention_backward: upstream " + upstream.shape() + " does not match output");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(cache.key.cols(), 1)));
  AttentionGradients g;
  g.value = matmul_tn(p, upstream);
  Tensor2D dp = matmul_nt(upstream, cache.value);
  Tensor2D ds(p.rows(), p.cols());
  ConstRowMajorMap pm(p.data(), static_cast<Eigen::Index>(p.rows()), static_cast<Eigen::Index>(p.cols()));
  RowMajorMap dpm(dp.data(), pm.rows(), pm.cols());
  RowMajorMap dsm(ds.data(), pm.rows(), pm.cols());
  const Eigen::VectorXd inner = (dpm.array() * pm.array()).rowwise().sum();
  dsm.array() = pm.array() * (dpm.array().colwise() - inner.array()) * scale;
  g.query = matmul(ds, cache.key);
  g.key = matmul_tn(ds, cache.query);
  return g;
}

Tensor2D psi_fuse(const FusionVariant& variant, const Tensor2D& features, const Tensor2D& neighborhood) {
  require_same_shape(features, neighborhood, "psi_fuse");
  switch (variant.kind) {
    case FusionKind::summation: return features + neighborhood;
    case FusionKind::linear_weighted: return features * variant.lambda1 + neighborhood * variant.lambda2;
    case FusionKind::cross_attention: return attention_forward(features, neighborhood, neighborhood);
  }
  return features + neighborhood;
}

Tensor2D phi_term(const FusionVariant& variant, const Tensor2D& consensus, const Tensor2D& view) {
  require_same_shape(consensus, view, "phi_fuse");
  switch (variant.kind) {
    case FusionKind::summation: return consensus + view;
    case FusionKind::linear_weighted: return consensus * variant.lambda1 + view * variant.lambda2;
    case FusionKind::cross_attention: {
      const Tensor2D q = matmul(view, projection_or_identity(variant.query_projection, view.cols()));
      const Tensor2D k = matmul(consensus, projection_or_identity(variant.key_projection, consensus.cols()));
      return attention_forward(q, k, consensus);
    }
  }
  return consensus + view;
}

Tensor2D phi_fuse(const FusionVariant& variant, const Tensor2D& consensus, const Tensor2D& view,
                  ConditioningForm form) {
  Tensor2D term = phi_term(variant, consensus, view);
  if (form == ConditioningForm::absorbed && variant.kind != FusionKind::cross_attention) return term;
  return view + term;
}

// Ψ --------------------------------------------------------------------------

FeatureNeighborFusion::FeatureNeighborFusion(FusionKind kind) : kind_(kind) {}

FusionVariant FeatureNeighborFusion::variant() const {
  FusionVariant v;
  v.kind = kind_;
  v.lambda1 = lambdas_.value(0, 0);
  v.lambda2 = lambdas_.value(0, 1);
  return v;
}

void FeatureNeighborFusion::set_lambdas(double lambda1, double lambda2) {
  lambdas_.value(0, 0) = lambda1;
  lambdas_.value(0, 1) = lambda2;
}

Tensor2D FeatureNeighborFusion::infer(const Tensor2D& features, const Tensor2D& neighborhood) const {
  return psi_fuse(variant(), features, neighborhood);
}

Tensor2D FeatureNeighborFusion::forward(const Tensor2D& features, const Tensor2D& neighborhood) {
  require_same_shape(features, neighborhood, "psi_fuse");
  cached_features_ = features;
  cached_neighborhood_ = neighborhood;
  if (kind_ == FusionKind::cross_attention) {
    cached_attention_.emplace();
    return attention_forward(features, neighborhood, neighborhood, &*cached_attention_);
  }
  return psi_fuse(variant(), features, neighborhood);
}

PairGradients FeatureNeighborFusion::backward(const Tensor2D& upstream) {
  if (!cached_features_) throw StateError("FeatureNeighborFusion::backward called before forward");
  require_same_shape(upstream, *cached_features_, "FeatureNeighborFusion::backward");
  PairGradients g;
  switch (kind_) {
    case FusionKind::summation:
      g.first = upstream;
      g.second = upstream;
      break;
    case FusionKind::linear_weighted:
      g.first = upstream * lambdas_.value(0, 0);
      g.second = upstream * lambdas_.value(0, 1);
      lambdas_.grad(0, 0) += dot_all(upstream, *cached_features_);
      lambdas_.grad(0, 1) += dot_all(upstream, *cached_neighborhood_);
      break;
    case FusionKind::cross_attention: {
      auto a = attention_backward(*cached_attention_, upstream);
      g.first = std::move(a.query);
      g.second = a.key + a.value;
      break;
    }
  }
  return g;
}

void FeatureNeighborFusion::project() {
  if (kind_ == FusionKind::linear_weighted) project_lambdas(lambdas_.value);
}

void FeatureNeighborFusion::collect(nn::ParameterList& out) {
  if (kind_ == FusionKind::linear_weighted) out.push_back(&lambdas_);
}

void FeatureNeighborFusion::zero_grad() { lambdas_.zero_grad(); }

// Φ --------------------------------------------------------------------------

ConsensusConditioner::ConsensusConditioner(FusionKind kind, std::size_t num_classes, ConditioningForm form)
    : kind_(kind),
      form_(form),
      query_proj_(Tensor2D::identity(num_classes)),
      key_proj_(Tensor2D::identity(num_classes)) {}

FusionVariant ConsensusConditioner::variant() const {
  FusionVariant v;
  v.kind = kind_;
  v.lambda1 = lambdas_.value(0, 0);
  v.lambda2 = lambdas_.value(0, 1);
  v.query_projection = query_proj_.value;
  v.key_projection = key_proj_.value;
  return v;
}

void ConsensusConditioner::set_lambdas(double lambda1, double lambda2) {
  lambdas_.value(0, 0) = lambda1;
  lambdas_.value(0, 1) = lambda2;
}

void ConsensusConditioner::set_projections(Tensor2D query, Tensor2D key) {
  query_proj_ = nn::Parameter(std::move(query));
  key_proj_ = nn::Parameter(std::move(key));
}

Tensor2D ConsensusConditioner::infer(const Tensor2D& consensus, const Tensor2D& view) const {
  return phi_fuse(variant(), consensus, view, form_);
}

Tensor2D ConsensusConditioner::forward(const Tensor2D& consensus, const Tensor2D& view) {
  require_same_shape(consensus, view, "phi_fuse");
  cached_consensus_ = consensus;
  cached_view_ = view;
  if (kind_ == FusionKind::cross_attention) {
    cached_attention_.emplace();
    const Tensor2D q = matmul(view, query_proj_.value);
    const Tensor2D k = matmul(consensus, key_proj_.value);
    return view + attention_forward(q, k, consensus, &*cached_attention_);
  }
  return phi_fuse(variant(), consensus, view, form_);
}

PairGradients ConsensusConditioner::backward(const Tensor2D& upstream) {
  if (!cached_view_) throw StateError("ConsensusConditioner::backward called before forward");
  require_same_shape(upstream, *cached_view_, "ConsensusConditioner::backward");
  const bool outer_view_term = form_ == ConditioningForm::literal || kind_ == FusionKind::cross_attention;
  PairGradients g;
  switch (kind_) {
    case FusionKind::summation:
      g.first = upstream;
      g.second = upstream * (outer_view_term ? 2.0 : 1.0);
      break;
    case FusionKind::linear_weighted:
      g.first = upstream * lambdas_.value(0, 0);
      g.second = upstream * (lambdas_.value(0, 1) + (outer_view_term ? 1.0 : 0.0));
      lambdas_.grad(0, 0) += dot_all(upstream, *cached_consensus_);
      lambdas_.grad(0, 1) += dot_all(upstream, *cached_view_);
      break;
    case FusionKind::cross_attention: {
      auto a = attention_backward(*cached_attention_, upstream);
      query_proj_.grad += matmul_tn(*cached_view_, a.query);
      key_proj_.grad += matmul_tn(*cached_consensus_, a.key);
      g.second = upstream + matmul_nt(a.query, query_proj_.value);
      g.first = matmul_nt(a.key, key_proj_.value) + a.value;
      break;
    }
  }
  return g;
}

void ConsensusConditioner::project() {
  if (kind_ == FusionKind::linear_weighted) project_lambdas(lambdas_.value);
}

void ConsensusConditioner::collect(nn::ParameterList& out) {
  if (kind_ == FusionKind::linear_weighted) out.push_back(&lambdas_);
  if (kind_ == FusionKind::cross_attention) {
    out.push_back(&query_proj_);
    out.push_back(&key_proj_);
  }
}

void ConsensusConditioner::zero_grad() {
  lambdas_.zero_grad();
  query_proj_.zero_grad();
  key_proj_.zero_grad();
}

// evidence head / consensus --------------------------------------------------

nn::DenseLayer make_evidence_head(std::size_t in_dim, std::size_t num_classes, nn::Activation activation) {
  if (activation == nn::Activation::identity) {
    throw ConfigError("evidence head needs a nonnegative activation (relu or softplus), got identity");
  }
  return nn::DenseLayer(in_dim, num_classes, activation);
}

Tensor2D evidence_head(const Tensor2D& fused, const nn::DenseLayer& head) {
  if (head.activation() == nn::Activation::identity) {
    throw ConfigError("evidence head needs a nonnegative activation (relu or softplus), got identity");
  }
  return head.infer(fused);
}

std::string_view to_string(ConsensusMode mode) { return mode == ConsensusMode::mean ? "mean" : "sample"; }

ConsensusMode consensus_mode_from_string(std::string_view name) {
  if (name == "mean") return ConsensusMode::mean;
  if (name == "sample") return ConsensusMode::sample;
  throw ConfigError("unknown consensus mode '" + std::string(name) + "' (expected mean or sample)");
}

Tensor2D mean_pool(std::span<const Tensor2D> views) {
  if (views.empty()) throw InputError("mean_pool: no views");
  Tensor2D pooled(views[0].rows(), views[0].cols());
  for (const auto& v : views) {
    if (!v.same_shape(pooled)) {
      throw InputError("consensus: view shapes differ " + v.shape() + " vs " + pooled.shape());
    }
    pooled += v;
  }
  pooled *= 1.0 / static_cast<double>(views.size());
  return pooled;
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, nn::Rng& rng) {
  std::vector<double> p(alpha.size());
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    p[k] = rng.gamma(alpha[k]);
    total += p[k];
  }
  if (!(total > 0.0)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

ConsensusExtractor::ConsensusExtractor(std::size_t in_dim, std::size_t num_classes)
    : layer_(in_dim, num_classes, nn::Activation::softplus) {}

Tensor2D ConsensusExtractor::alpha(std::span<const Tensor2D> view_features) const {
  Tensor2D a = layer_.infer(mean_pool(view_features));
  for (double& v : a.values()) v += 1.0;
  return a;
}

namespace {

Tensor2D consensus_from_alpha_output(Tensor2D evidence, nn::Rng& rng, ConsensusMode mode) {
  if (mode == ConsensusMode::mean) return evidence;
  const std::size_t k = evidence.cols();
  std::vector<double> alpha(k);
  for (std::size_t i = 0; i < evidence.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      alpha[j] = evidence(i, j) + 1.0;
      total += alpha[j];
    }
    const auto p = sample_dirichlet(alpha, rng);
    const double mass = total - static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) evidence(i, j) = p[j] * mass;
  }
  return evidence;
}

}  // namespace

Tensor2D ConsensusExtractor::infer(std::span<const Tensor2D> view_features, nn::Rng& rng,
                                   ConsensusMode mode) const {
  return consensus_from_alpha_output(layer_.infer(mean_pool(view_features)), rng, mode);
}

Tensor2D ConsensusExtractor::forward(std::span<const Tensor2D> view_features, nn::Rng& rng,
                                     ConsensusMode mode) {
  cached_views_ = view_features.size();
  cached_mode_ = mode;
  return consensus_from_alpha_output(layer_.forward(mean_pool(view_features)), rng, mode);
}

std::vector<Tensor2D> ConsensusExtractor::backward(const Tensor2D& upstream) {
  if (!cached_mode_) throw StateError("ConsensusExtractor::backward called before forward");
  std::vector<Tensor2D> grads;
  if (*cached_mode_ == ConsensusMode::sample) {
    grads.assign(cached_views_, Tensor2D(upstream.rows(), layer_.in_dim()));
    return grads;
  }
  Tensor2D pooled_grad = layer_.backward(upstream).input;
  pooled_grad *= 1.0 / static_cast<double>(cached_views_);
  grads.assign(cached_views_, pooled_grad);
  return grads;
}

Tensor2D consensus_evidence(const ConsensusExtractor& extractor, std::span<const Tensor2D> view_features,
                            nn::Rng& rng, ConsensusMode mode) {
  return extractor.infer(view_features, rng, mode);
}

}  // namespace tuned::evidence
