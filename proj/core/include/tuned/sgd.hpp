#pragma once

#include <span>
#include <vector>

#include "tuned/parameter.hpp"
#include "tuned/tensor.hpp"

namespace tuned::nn {

/// SGD with classical momentum:
///   v <- momentum * v - lr * g
///   p <- p + v
class SgdState {
 public:
  SgdState(double learning_rate = 0.003, double momentum = 0.9);

  double learning_rate() const noexcept { return learning_rate_; }
  double momentum() const noexcept { return momentum_; }
  const std::vector<Tensor2D>& velocity() const noexcept { return velocity_; }

  /// Velocity buffers are created on the first call and must keep matching
  /// the parameter shapes afterwards.
  void step(std::span<Tensor2D> params, std::span<const Tensor2D> grads);
  void step(const ParameterList& params);

 private:
  void update(std::size_t slot, Tensor2D& param, const Tensor2D& grad);

  double learning_rate_;
  double momentum_;
  std::vector<Tensor2D> velocity_;
};

}  // namespace tuned::nn
