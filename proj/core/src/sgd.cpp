#include "tuned/sgd.hpp"

#include <string>

#include "tuned/errors.hpp"

namespace tuned::nn {

SgdState::SgdState(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0)) throw ConfigError("SGD learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("SGD momentum must lie in [0, 1)");
}

void SgdState::update(std::size_t slot, Tensor2D& param, const Tensor2D& grad) {
  if (!param.same_shape(grad)) {
    throw ShapeError("sgd step: parameter " + std::to_string(slot) + " has shape " +
                     param.shape() + " but gradient " + grad.shape());
  }
  if (slot == velocity_.size()) velocity_.emplace_back(param.rows(), param.cols());
  Tensor2D& v = velocity_[slot];
  if (!v.same_shape(param)) {
    throw ShapeError("sgd step: velocity " + std::to_string(slot) + " has shape " + v.shape() +
                     " but parameter " + param.shape());
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    v.data()[i] = momentum_ * v.data()[i] - learning_rate_ * grad.data()[i];
    param.data()[i] += v.data()[i];
  }
}

void SgdState::step(std::span<Tensor2D> params, std::span<const Tensor2D> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (!velocity_.empty() && velocity_.size() != params.size()) {
    throw ShapeError("sgd step: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) update(i, params[i], grads[i]);
}

void SgdState::step(const ParameterList& params) {
  if (!velocity_.empty() && velocity_.size() != params.size()) {
    throw ShapeError("sgd step: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) update(i, params[i]->value, params[i]->grad);
}

}  // namespace tuned::nn
