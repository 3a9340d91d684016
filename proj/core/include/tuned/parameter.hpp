#pragma once

#include <vector>

#include "tuned/tensor.hpp"

namespace tuned::nn {

/// A trainable tensor together with its gradient accumulator.
struct Parameter {
  Tensor2D value;
  Tensor2D grad;

  Parameter() = default;
  explicit Parameter(Tensor2D v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Tensor2D(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

}  // namespace tuned::nn
