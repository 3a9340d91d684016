#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "tuned/parameter.hpp"
#include "tuned/rng.hpp"
#include "tuned/tensor.hpp"

namespace tuned::nn {

enum class Activation { identity, relu, softplus };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Applies the activation elementwise.
Tensor2D activate(Activation a, const Tensor2D& pre);
/// Multiplies `upstream` by the activation derivative evaluated at `pre`.
Tensor2D activation_backward(Activation a, const Tensor2D& pre, const Tensor2D& upstream);

struct DenseGradients {
  Tensor2D input;
  Tensor2D weights;
  Tensor2D bias;  // 1 x out_dim
};

/// Fully connected layer y = act(x W + b) with W of shape in_dim x out_dim.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation activation);
  DenseLayer(Tensor2D weights, Tensor2D bias, Activation activation);

  /// He-style Gaussian init for relu, Glorot-style otherwise; bias zero.
  void initialize(Rng& rng);

  std::size_t in_dim() const noexcept { return weights_.value.rows(); }
  std::size_t out_dim() const noexcept { return weights_.value.cols(); }
  Activation activation() const noexcept { return activation_; }

  const Tensor2D& weights() const noexcept { return weights_.value; }
  const Tensor2D& bias() const noexcept { return bias_.value; }
  Tensor2D& weights() noexcept { return weights_.value; }
  Tensor2D& bias() noexcept { return bias_.value; }

  /// Forward pass that caches the input and pre-activation for backward().
  Tensor2D forward(const Tensor2D& input);
  /// Forward pass without touching the cache; safe to call concurrently.
  Tensor2D infer(const Tensor2D& input) const;
  /// Gradients of the cached forward pass. The weight and bias gradients are
  /// also accumulated into the layer's parameters.
  DenseGradients backward(const Tensor2D& upstream);

  bool has_cache() const noexcept { return cached_input_.has_value(); }
  void clear_cache();

  void collect(ParameterList& out);
  void zero_grad();

 private:
  void check_input(const Tensor2D& input) const;

  Parameter weights_;
  Parameter bias_;
  Activation activation_ = Activation::identity;
  std::optional<Tensor2D> cached_input_;
  std::optional<Tensor2D> cached_pre_;
};

}  // namespace tuned::nn
