#include "tuned/dense.hpp"

#include <algorithm>
#include <cmath>

#include "tuned/errors.hpp"
#include "tuned/special.hpp"

namespace tuned::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "softplus") return Activation::softplus;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Tensor2D activate(Activation a, const Tensor2D& pre) {
  Tensor2D out = pre;
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::softplus:
      for (double& v : out.values()) v = softplus(v);
      break;
  }
  return out;
}

Tensor2D activation_backward(Activation a, const Tensor2D& pre, const Tensor2D& upstream) {
  require_same_shape(pre, upstream, "activation_backward");
  Tensor2D out = upstream;
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      for (std::size_t i = 0; i < out.size(); ++i)
        if (!(pre.data()[i] > 0.0)) out.data()[i] = 0.0;
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= sigmoid(pre.data()[i]);
      break;
  }
  return out;
}

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation activation)
    : weights_(Tensor2D(in_dim, out_dim)), bias_(Tensor2D(1, out_dim)), activation_(activation) {}

DenseLayer::DenseLayer(Tensor2D weights, Tensor2D bias, Activation activation)
    : weights_(std::move(weights)), bias_(std::move(bias)), activation_(activation) {
  if (bias_.value.rows() != 1 || bias_.value.cols() != weights_.value.cols()) {
    throw ShapeError("DenseLayer: bias " + bias_.value.shape() + " does not match weights " +
                     weights_.value.shape());
  }
}

void DenseLayer::initialize(Rng& rng) {
  const double fan_in = static_cast<double>(std::max<std::size_t>(in_dim(), 1));
  const double fan_out = static_cast<double>(std::max<std::size_t>(out_dim(), 1));
  const double stddev = activation_ == Activation::relu ? std::sqrt(2.0 / fan_in)
                                                         : std::sqrt(2.0 / (fan_in + fan_out));
  for (double& w : weights_.value.values()) w = rng.normal(0.0, stddev);
  bias_.value.fill(0.0);
}

void DenseLayer::check_input(const Tensor2D& input) const {
  if (input.cols() != in_dim()) {
    throw ShapeError("DenseLayer: input " + input.shape() + " incompatible with weights " +
                     weights_.value.shape());
  }
}

Tensor2D DenseLayer::infer(const Tensor2D& input) const {
  check_input(input);
  Tensor2D pre = matmul(input, weights_.value);
  for (std::size_t i = 0; i < pre.rows(); ++i)
    for (std::size_t j = 0; j < pre.cols(); ++j) pre(i, j) += bias_.value(0, j);
  return activate(activation_, pre);
}

Tensor2D DenseLayer::forward(const Tensor2D& input) {
  check_input(input);
  Tensor2D pre = matmul(input, weights_.value);
  for (std::size_t i = 0; i < pre.rows(); ++i)
    for (std::size_t j = 0; j < pre.cols(); ++j) pre(i, j) += bias_.value(0, j);
  Tensor2D out = activate(activation_, pre);
  cached_input_ = input;
  cached_pre_ = std::move(pre);
  return out;
}

DenseGradients DenseLayer::backward(const Tensor2D& upstream) {
  if (!cached_input_) throw StateError("DenseLayer::backward called before forward");
  if (upstream.rows() != cached_pre_->rows() || upstream.cols() != out_dim()) {
    throw ShapeError("DenseLayer::backward: upstream " + upstream.shape() + " expected " +
                     cached_pre_->shape());
  }
  const Tensor2D delta = activation_backward(activation_, *cached_pre_, upstream);
  DenseGradients g;
  g.weights = matmul_tn(*cached_input_, delta);
  g.bias = column_sums(delta);
  g.input = matmul_nt(delta, weights_.value);
  weights_.grad += g.weights;
  bias_.grad += g.bias;
  return g;
}

void DenseLayer::clear_cache() {
  cached_input_.reset();
  cached_pre_.reset();
}

void DenseLayer::collect(ParameterList& out) {
  out.push_back(&weights_);
  out.push_back(&bias_);
}

void DenseLayer::zero_grad() {
  weights_.zero_grad();
  bias_.zero_grad();
}

}  // namespace tuned::nn
