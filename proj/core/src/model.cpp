#include "tuned/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "tuned/errors.hpp"

namespace tuned::pipeline {
namespace {

std::string key_error(std::string_view key, std::string_view value, std::string_view expected) {
  return "config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
         std::string(value) + "'";
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key_error(key, value, "a nonnegative integer"));
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    throw ConfigError(key_error(key, value, "a finite number"));
  }
  return out;
}

bool parse_flag(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(key_error(key, value, "true or false"));
}

template <typename F>
auto parse_enum(std::string_view key, std::string_view value, F&& convert) {
  try {
    return convert(value);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what());
  }
}

std::string real_string(double x) {
  std::ostringstream out;
  out.precision(17);
  out << x;
  return out.str();
}

std::string flag_string(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string_view to_string(AccInput a) { return a == AccInput::conditioned ? "conditioned" : "raw"; }

AccInput acc_input_from_string(std::string_view name) {
  if (name == "conditioned") return AccInput::conditioned;
  if (name == "raw") return AccInput::raw;
  throw ConfigError("unknown acc_input '" + std::string(name) + "' (expected conditioned or raw)");
}

void ModelConfig::validate() const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (use_gcn && gcn_layers < 1) throw ConfigError("gcn_layers must be >= 1 when use_gcn is set");
  if (!(fusion.tau >= 0.0 && fusion.tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  if (!(learning_rate >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  loss.validate();
}

bool set_model_key(ModelConfig& c, std::string_view key, std::string_view value) {
  using namespace evidence;
  if (key == "k") c.k = parse_size(key, value);
  else if (key == "hidden") c.hidden = parse_size(key, value);
  else if (key == "gcn_layers") c.gcn_layers = parse_size(key, value);
  else if (key == "use_gcn") c.use_gcn = parse_flag(key, value);
  else if (key == "psi") c.psi = parse_enum(key, value, fusion_kind_from_string);
  else if (key == "phi") c.phi = parse_enum(key, value, fusion_kind_from_string);
  else if (key == "conditioning") c.conditioning = parse_enum(key, value, conditioning_form_from_string);
  else if (key == "use_consensus") c.use_consensus = parse_flag(key, value);
  else if (key == "consensus_train") c.consensus_train = parse_enum(key, value, consensus_mode_from_string);
  else if (key == "consensus_eval") c.consensus_eval = parse_enum(key, value, consensus_mode_from_string);
  else if (key == "backend") c.backend = parse_enum(key, value, fusion::backend_from_string);
  else if (key == "tau") c.fusion.tau = parse_real(key, value);
  else if (key == "similarity_scope") c.fusion.scope = parse_enum(key, value, fusion::similarity_scope_from_string);
  else if (key == "reduction") c.fusion.reduction = parse_enum(key, value, fusion::reduction_from_string);
  else if (key == "lambda_t") c.loss.lambda_t = parse_real(key, value);
  else if (key == "gamma") c.loss.gamma_frob = parse_real(key, value);
  else if (key == "anneal_steps") c.loss.anneal_steps = parse_size(key, value);
  else if (key == "evidence_clip") c.loss.evidence_clip = parse_real(key, value);
  else if (key == "frobenius") c.loss.frobenius = parse_enum(key, value, losses::frobenius_mode_from_string);
  else if (key == "acc_input") c.acc_input = parse_enum(key, value, acc_input_from_string);
  else if (key == "fused_supervision") c.fused_supervision = parse_flag(key, value);
  else if (key == "lr") c.learning_rate = parse_real(key, value);
  else if (key == "momentum") c.momentum = parse_real(key, value);
  else if (key == "epochs") c.epochs = parse_size(key, value);
  else if (key == "patience") c.patience = parse_size(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& c) {
  using evidence::to_string;
  return {
      {"k", std::to_string(c.k)},
      {"hidden", std::to_string(c.hidden)},
      {"gcn_layers", std::to_string(c.gcn_layers)},
      {"use_gcn", flag_string(c.use_gcn)},
      {"psi", std::string(to_string(c.psi))},
      {"phi", std::string(to_string(c.phi))},
      {"conditioning", std::string(to_string(c.conditioning))},
      {"use_consensus", flag_string(c.use_consensus)},
      {"consensus_train", std::string(to_string(c.consensus_train))},
      {"consensus_eval", std::string(to_string(c.consensus_eval))},
      {"backend", std::string(fusion::to_string(c.backend))},
      {"tau", real_string(c.fusion.tau)},
      {"similarity_scope", std::string(fusion::to_string(c.fusion.scope))},
      {"reduction", std::string(fusion::to_string(c.fusion.reduction))},
      {"lambda_t", real_string(c.loss.lambda_t)},
      {"gamma", real_string(c.loss.gamma_frob)},
      {"anneal_steps", std::to_string(c.loss.anneal_steps)},
      {"evidence_clip", real_string(c.loss.evidence_clip)},
      {"frobenius", std::string(losses::to_string(c.loss.frobenius))},
      {"acc_input", std::string(pipeline::to_string(c.acc_input))},
      {"fused_supervision", flag_string(c.fused_supervision)},
      {"lr", real_string(c.learning_rate)},
      {"momentum", real_string(c.momentum)},
      {"epochs", std::to_string(c.epochs)},
      {"patience", std::to_string(c.patience)},
  };
}

Tensor2D clip_evidence(const Tensor2D& evidence, double clip) {
  Tensor2D out = evidence;
  for (double& x : out.values()) x = std::min(x, clip);
  return out;
}

ModelBundle::ModelBundle(ModelConfig config, std::vector<std::size_t> view_dims, std::size_t num_classes,
                         std::uint64_t seed)
    : config_(std::move(config)),
      view_dims_(std::move(view_dims)),
      num_classes_(num_classes),
      seed_(seed),
      optimizer_(config_.learning_rate, config_.momentum),
      train_rng_(seed ^ 0x5eed5eed5eed5eedULL) {
  config_.validate();
  if (view_dims_.empty()) throw ConfigError("model needs at least one view");
  if (num_classes_ < 2) throw ConfigError("model needs at least two classes");
  nn::Rng rng(seed);
  const std::size_t h = config_.hidden;
  for (std::size_t v = 0; v < view_dims_.size(); ++v) {
    if (view_dims_[v] == 0) throw ConfigError("view " + std::to_string(v) + " has no features");
    ViewBranch b;
    b.feature = nn::DenseLayer(view_dims_[v], h, nn::Activation::relu);
    b.feature.initialize(rng);
    for (std::size_t l = 0; l < config_.gcn_layers; ++l) {
      graph::GcnLayer layer(h, h, nn::Activation::relu);
      layer.initialize(rng);
      b.gcn.push_back(std::move(layer));
    }
    b.psi = evidence::FeatureNeighborFusion(config_.psi);
    b.head = evidence::make_evidence_head(h, num_classes_, nn::Activation::softplus);
    b.head.initialize(rng);
    b.phi = evidence::ConsensusConditioner(config_.phi, num_classes_, config_.conditioning);
    branches_.push_back(std::move(b));
  }
  extractor_ = evidence::ConsensusExtractor(h, num_classes_);
  extractor_.initialize(rng);
}

void ModelBundle::check_views(std::span<const Tensor2D> views) const {
  if (views.size() != view_dims_.size()) {
    throw ShapeError("model expects " + std::to_string(view_dims_.size()) + " views, got " +
                     std::to_string(views.size()));
  }
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].cols() != view_dims_[v]) {
      throw ShapeError("view " + std::to_string(v) + ": model expects " + std::to_string(view_dims_[v]) +
                       " features, got " + std::to_string(views[v].cols()));
    }
    if (views[v].rows() != views[0].rows()) throw ShapeError("views disagree on the number of rows");
  }
}

void ModelBundle::attach_training_data(std::vector<Tensor2D> train_views) {
  check_views(train_views);
  const std::size_t n = train_views[0].rows();
  if (n < 3) throw InputError("training split needs at least 3 rows to build a neighbour graph");
  k_ = std::min(config_.k, n - 2);
  graphs_.clear();
  if (config_.use_gcn) {
    for (const auto& x : train_views) graphs_.push_back(graph::build_neighbor_graph(x, k_));
  }
  train_views_ = std::move(train_views);
}

Prediction ModelBundle::finish(std::vector<Tensor2D> representation, std::vector<Tensor2D> evidence,
                               nn::Rng& rng) const {
  Prediction p;
  p.representation = std::move(representation);
  p.view_evidence = std::move(evidence);
  if (config_.use_consensus) {
    p.consensus = extractor_.infer(p.representation, rng, config_.consensus_eval);
    for (std::size_t v = 0; v < num_views(); ++v) {
      p.conditioned.push_back(branches_[v].phi.infer(p.consensus, p.view_evidence[v]));
    }
  } else {
    p.conditioned = p.view_evidence;
  }
  p.fused = fusion::fuse(config_.backend, p.conditioned, config_.fusion);
  return p;
}

Prediction ModelBundle::predict_train() const {
  if (!has_training_data()) throw StateError("model has no training data attached");
  std::vector<Tensor2D> reps, evid;
  for (std::size_t v = 0; v < num_views(); ++v) {
    const auto& b = branches_[v];
    Tensor2D h = b.feature.infer(train_views_[v]);
    Tensor2D r = h;
    if (config_.use_gcn) {
      Tensor2D q = h;
      for (const auto& layer : b.gcn) q = layer.infer(graphs_[v].normalized, q);
      r = b.psi.infer(h, q);
    }
    evid.push_back(clip_evidence(b.head.infer(r), config_.loss.evidence_clip));
    reps.push_back(std::move(r));
  }
  nn::Rng rng(seed_ ^ 0xe7a1e7a1e7a1e7a1ULL);
  return finish(std::move(reps), std::move(evid), rng);
}

Prediction ModelBundle::predict(std::span<const Tensor2D> views) const {
  if (!has_training_data()) throw StateError("model has no training data attached");
  check_views(views);
  if (views.empty() || views[0].rows() == 0) throw InputError("predict: no rows");
  std::vector<Tensor2D> reps, evid;
  for (std::size_t v = 0; v < num_views(); ++v) {
    const auto& b = branches_[v];
    Tensor2D h = b.feature.infer(views[v]);
    Tensor2D r = h;
    if (config_.use_gcn) {
      const auto attach = graph::attach_queries(train_views_[v], views[v], graphs_[v].degrees, k_);
      Tensor2D train_q = b.feature.infer(train_views_[v]);
      Tensor2D q = h;
      for (const auto& layer : b.gcn) {
        Tensor2D next_q = layer.infer(attach, vstack(train_q, q));
        train_q = layer.infer(graphs_[v].normalized, train_q);
        q = std::move(next_q);
      }
      r = b.psi.infer(h, q);
    }
    evid.push_back(clip_evidence(b.head.infer(r), config_.loss.evidence_clip));
    reps.push_back(std::move(r));
  }
  nn::Rng rng(seed_ ^ 0xe7a1e7a1e7a1e7a1ULL);
  return finish(std::move(reps), std::move(evid), rng);
}

StepStats ModelBundle::train_step(std::span<const int> labels, std::size_t epoch) {
  if (!has_training_data()) throw StateError("model has no training data attached");
  const std::size_t n = train_views_[0].rows();
  if (labels.size() != n) throw ShapeError("train_step: label count does not match training rows");
  const std::size_t nv = num_views();
  const double clip = config_.loss.evidence_clip;

  for (auto* p : parameters()) p->zero_grad();

  std::vector<Tensor2D> hs(nv), reps(nv), raw(nv), clipped(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    auto& b = branches_[v];
    hs[v] = b.feature.forward(train_views_[v]);
    reps[v] = hs[v];
    if (config_.use_gcn) {
      Tensor2D q = hs[v];
      for (auto& layer : b.gcn) q = layer.forward(graphs_[v].normalized, q);
      reps[v] = b.psi.forward(hs[v], q);
    }
    raw[v] = b.head.forward(reps[v]);
    clipped[v] = clip_evidence(raw[v], clip);
  }

  Tensor2D consensus;
  std::vector<Tensor2D> conditioned(nv);
  if (config_.use_consensus) {
    consensus = extractor_.forward(reps, train_rng_, config_.consensus_train);
    for (std::size_t v = 0; v < nv; ++v) conditioned[v] = branches_[v].phi.forward(consensus, clipped[v]);
  } else {
    conditioned = clipped;
  }

  fusion::FusionResult fused = fusion::fuse(config_.backend, conditioned, config_.fusion);

  const auto y = losses::LabelBatch::from_labels(labels, num_classes_);
  const auto& acc_source = config_.acc_input == AccInput::conditioned ? conditioned : clipped;
  std::vector<Tensor2D> alphas;
  for (const auto& e : acc_source) {
    Tensor2D a = e;
    for (double& x : a.values()) x += 1.0;
    alphas.push_back(std::move(a));
  }
  Tensor2D fused_alpha = fused.evidence;
  for (double& x : fused_alpha.values()) x += 1.0;
  StepStats stats;
  stats.loss = losses::total_loss(alphas, config_.fused_supervision ? &fused_alpha : nullptr, y, epoch,
                                  config_.loss);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = fused.evidence.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[i]) ++correct;
  }
  stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  stats.graph = fused.graph;

  // Backward. Fusion coefficients are treated as constants.
  std::vector<Tensor2D> d_cond(nv, Tensor2D(n, num_classes_));
  std::vector<Tensor2D> d_clipped(nv, Tensor2D(n, num_classes_));
  for (std::size_t v = 0; v < nv; ++v) {
    if (config_.acc_input == AccInput::conditioned) d_cond[v] += stats.loss.view_grads[v];
    else d_clipped[v] += stats.loss.view_grads[v];
    if (config_.fused_supervision) {
      for (std::size_t i = 0; i < n; ++i) {
        const double c = fused.coefficients(i, v);
        for (std::size_t j = 0; j < num_classes_; ++j) d_cond[v](i, j) += c * stats.loss.fused_grad(i, j);
      }
    }
  }

  std::vector<Tensor2D> d_reps(nv);
  if (config_.use_consensus) {
    Tensor2D d_consensus(n, num_classes_);
    for (std::size_t v = 0; v < nv; ++v) {
      auto g = branches_[v].phi.backward(d_cond[v]);
      d_consensus += g.first;
      d_clipped[v] += g.second;
    }
    d_reps = extractor_.backward(d_consensus);
  } else {
    for (std::size_t v = 0; v < nv; ++v) d_clipped[v] += d_cond[v];
    d_reps.assign(nv, Tensor2D(n, config_.hidden));
  }

  for (std::size_t v = 0; v < nv; ++v) {
    auto& b = branches_[v];
    Tensor2D d_raw = d_clipped[v];
    for (std::size_t i = 0; i < d_raw.size(); ++i) {
      if (raw[v].values()[i] > clip) d_raw.values()[i] = 0.0;
    }
    d_reps[v] += b.head.backward(d_raw).input;
    Tensor2D d_h = d_reps[v];
    if (config_.use_gcn) {
      auto g = b.psi.backward(d_reps[v]);
      d_h = std::move(g.first);
      Tensor2D d_q = std::move(g.second);
      for (auto it = b.gcn.rbegin(); it != b.gcn.rend(); ++it) d_q = it->backward(d_q).features;
      d_h += d_q;
    }
    b.feature.backward(d_h);
  }

  optimizer_.step(parameters());
  for (auto& b : branches_) {
    b.psi.project();
    b.phi.project();
  }
  return stats;
}

nn::ParameterList ModelBundle::parameters() {
  nn::ParameterList out;
  for (auto& b : branches_) {
    b.feature.collect(out);
    for (auto& layer : b.gcn) layer.collect(out);
    b.psi.collect(out);
    b.head.collect(out);
    b.phi.collect(out);
  }
  extractor_.collect(out);
  return out;
}

std::vector<Tensor2D> ModelBundle::parameter_values() const {
  auto params = const_cast<ModelBundle*>(this)->parameters();
  std::vector<Tensor2D> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void ModelBundle::set_parameter_values(const std::vector<Tensor2D>& values) {
  auto params = parameters();
  if (values.size() != params.size()) {
    throw ShapeError("expected " + std::to_string(params.size()) + " parameter tensors, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->value, values[i], "set_parameter_values");
    params[i]->value = values[i];
  }
}

}  // namespace tuned::pipeline
