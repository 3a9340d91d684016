#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "tuned/rng.hpp"
#include "tuned/tensor.hpp"

namespace tuned::test {

inline Tensor2D random_tensor(std::size_t rows, std::size_t cols, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor2D t(rows, cols);
  for (auto& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

/// Central differences of a scalar function with respect to every entry of `x`.
inline Tensor2D numeric_gradient(const std::function<double(const Tensor2D&)>& f, const Tensor2D& x,
                                 double h = 1e-5) {
  Tensor2D g(x.rows(), x.cols());
  Tensor2D probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe.values()[i];
    probe.values()[i] = saved + h;
    const double up = f(probe);
    probe.values()[i] = saved - h;
    const double down = f(probe);
    probe.values()[i] = saved;
    g.values()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max |a - n| / max(|a|, |n|, 1e-4) over entries. Near-zero entries are
/// compared on an absolute scale of 1e-8.
inline double max_rel_error(const Tensor2D& analytic, const Tensor2D& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.values()[i], n = numeric.values()[i];
    worst = std::max(worst, std::abs(a - n) / std::max({1e-4, std::abs(a), std::abs(n)}));
  }
  return worst;
}

/// Weighted sum <w, y>, the usual way to turn a matrix output into a scalar.
inline double dot(const Tensor2D& w, const Tensor2D& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w.values()[i] * y.values()[i];
  return s;
}

}  // namespace tuned::test

#include "tuned/parameter.hpp"

namespace tuned::test {

/// Central differences of `f` with respect to one parameter's value.
inline Tensor2D numeric_parameter_gradient(nn::Parameter& p, const std::function<double()>& f, double h = 1e-5) {
  const Tensor2D saved = p.value;
  const auto g = numeric_gradient(
      [&](const Tensor2D& v) {
        p.value = v;
        return f();
      },
      saved, h);
  p.value = saved;
  return g;
}

}  // namespace tuned::test
