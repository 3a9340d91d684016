#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tuned/dense.hpp"
#include "tuned/evidence.hpp"
#include "tuned/fusion.hpp"
#include "tuned/graph.hpp"
#include "tuned/losses.hpp"
#include "tuned/sgd.hpp"
#include "tuned/tensor.hpp"

namespace tuned::pipeline {

/// Which evidence the per-view accuracy loss sees.
///   conditioned  alpha = ẽ + 1 (after the consensus term)
///   raw          alpha = e + 1
enum class AccInput { conditioned, raw };

std::string_view to_string(AccInput a);
AccInput acc_input_from_string(std::string_view name);

/// Model and optimisation hyperparameters. Every field has a default and a
/// flat config key (see set_model_key).
struct ModelConfig {
  std::size_t k = 10;  // neighbours per sample, clamped to n - 2
  std::size_t hidden = 64;
  std::size_t gcn_layers = 1;
  bool use_gcn = true;
  evidence::FusionKind psi = evidence::FusionKind::summation;
  evidence::FusionKind phi = evidence::FusionKind::cross_attention;
  evidence::ConditioningForm conditioning = evidence::ConditioningForm::literal;
  bool use_consensus = true;
  evidence::ConsensusMode consensus_train = evidence::ConsensusMode::mean;
  evidence::ConsensusMode consensus_eval = evidence::ConsensusMode::mean;
  fusion::Backend backend = fusion::Backend::smrf;
  fusion::FusionOptions fusion{0.7, fusion::SimilarityScope::per_sample, fusion::Reduction::edge_sum, false};
  losses::LossConfig loss{50, 0.01, 0.01, 1e4, losses::FrobeniusMode::scaled};
  AccInput acc_input = AccInput::raw;
  bool fused_supervision = true;
  double learning_rate = 0.03;
  double momentum = 0.9;
  std::size_t epochs = 300;
  std::size_t patience = 30;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Sets one field from its config key. Returns false for an unknown key and
/// throws ConfigError for a malformed value.
bool set_model_key(ModelConfig& config, std::string_view key, std::string_view value);
/// All keys with their current values, in a fixed order.
std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& config);

/// f^v -> g^v (GCN stack) -> Ψ -> evidence head, plus the view's Φ.
struct ViewBranch {
  nn::DenseLayer feature;
  std::vector<graph::GcnLayer> gcn;
  evidence::FeatureNeighborFusion psi;
  nn::DenseLayer head;
  evidence::ConsensusConditioner phi;
};

/// Everything a forward pass produces.
struct Prediction {
  std::vector<Tensor2D> representation;  // Ψ output per view
  std::vector<Tensor2D> view_evidence;   // e^v, clipped
  Tensor2D consensus;                    // e◇ (empty without consensus)
  std::vector<Tensor2D> conditioned;     // ẽ^v
  fusion::FusionResult fused;
};

struct StepStats {
  losses::TotalLoss loss;
  double train_accuracy = 0.0;
  std::optional<fusion::FusionGraph> graph;
};

class ModelBundle {
 public:
  ModelBundle() = default;
  /// Builds and initializes all parameters from `seed`. Initialization does
  /// not depend on the fusion backend.
  ModelBundle(ModelConfig config, std::vector<std::size_t> view_dims, std::size_t num_classes, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ModelConfig& config() noexcept { return config_; }
  std::size_t num_views() const noexcept { return view_dims_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<std::size_t>& view_dims() const noexcept { return view_dims_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t epochs_run() const noexcept { return epochs_run_; }
  void set_epochs_run(std::size_t e) noexcept { epochs_run_ = e; }

  /// Stores the training rows and builds one CAN graph per view.
  void attach_training_data(std::vector<Tensor2D> train_views);
  bool has_training_data() const noexcept { return !train_views_.empty(); }
  const std::vector<Tensor2D>& train_views() const noexcept { return train_views_; }
  const graph::NeighborGraph& neighbor_graph(std::size_t view) const { return graphs_.at(view); }
  std::size_t effective_k() const noexcept { return k_; }

  /// Forward pass over the stored training rows.
  Prediction predict_train() const;
  /// Forward pass for new rows, attached to the training graphs.
  Prediction predict(std::span<const Tensor2D> views) const;

  /// One full-batch forward/backward/SGD step on the training rows.
  StepStats train_step(std::span<const int> labels, std::size_t epoch);

  /// Trainable parameters in a fixed order.
  nn::ParameterList parameters();
  std::vector<Tensor2D> parameter_values() const;
  void set_parameter_values(const std::vector<Tensor2D>& values);

  const std::vector<ViewBranch>& branches() const noexcept { return branches_; }
  const evidence::ConsensusExtractor& extractor() const noexcept { return extractor_; }

 private:
  void check_views(std::span<const Tensor2D> views) const;
  Prediction finish(std::vector<Tensor2D> representation, std::vector<Tensor2D> evidence, nn::Rng& rng) const;

  ModelConfig config_;
  std::vector<std::size_t> view_dims_;
  std::size_t num_classes_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t epochs_run_ = 0;
  std::vector<ViewBranch> branches_;
  evidence::ConsensusExtractor extractor_;
  nn::SgdState optimizer_;
  nn::Rng train_rng_;
  std::size_t k_ = 0;
  std::vector<Tensor2D> train_views_;
  std::vector<graph::NeighborGraph> graphs_;
};

/// Elementwise min(e, clip).
Tensor2D clip_evidence(const Tensor2D& evidence, double clip);

}  // namespace tuned::pipeline
