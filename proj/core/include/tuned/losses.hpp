#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tuned/tensor.hpp"

namespace tuned::losses {

/// scaled:  -gamma * sum_v ||E^v||_F^2 / (V N)   (default, bounded step sizes)
/// literal: -gamma * sum_v ||E^v||_F^2
enum class FrobeniusMode { scaled, literal };

std::string_view to_string(FrobeniusMode mode);
FrobeniusMode frobenius_mode_from_string(std::string_view name);

struct LossConfig {
  std::size_t anneal_steps = 50;  // T in lambda_s = min(1, s / T)
  double lambda_t = 1.0;          // weight of the consistency loss
  double gamma_frob = 0.01;       // coefficient of the Frobenius regularizer
  double evidence_clip = 1e4;     // cap on evidence during training
  FrobeniusMode frobenius = FrobeniusMode::scaled;

  void validate() const;
};

/// One-hot labels, n x K.
struct LabelBatch {
  Tensor2D one_hot;

  static LabelBatch from_labels(std::span<const int> labels, std::size_t num_classes);
  std::size_t size() const noexcept { return one_hot.rows(); }
  std::size_t num_classes() const noexcept { return one_hot.cols(); }
};

/// Batch-mean loss value and its gradient with respect to the input matrix.
struct LossValue {
  double value = 0.0;
  Tensor2D grad;
};

/// mean_n sum_j y_nj (psi(S_n) - psi(alpha_nj)).
LossValue loss_ace(const Tensor2D& alpha, const LabelBatch& y);

/// mean_n KL[Dir(alpha~_n) || Dir(1)], alpha~ = y + (1 - y) * alpha.
LossValue loss_kl(const Tensor2D& alpha, const LabelBatch& y);

/// min(1, s / T).
double lambda_s(std::size_t step, std::size_t anneal_steps);

/// loss_ace + lambda_s * loss_kl.
LossValue loss_acc(const Tensor2D& alpha, const LabelBatch& y, std::size_t step, std::size_t anneal_steps);

struct ConsistencyLoss {
  double value = 0.0;
  double cosine_term = 0.0;
  double variance_term = 0.0;
  double frobenius_term = 0.0;
  std::vector<Tensor2D> grads;  // one per view, d value / d E^v
};

/// - 2/(V(V-1)) sum_{i<j} mean_n cos(e_n^i, e_n^j)
/// + 1/(V N) sum_v sum_n ||e_n^v - mu^v||^2
/// - gamma * sum_v ||E^v||_F^2 * (1/(V N) when scaled)
/// Zero-norm rows contribute 0 to the cosine term.
ConsistencyLoss loss_con(std::span<const Tensor2D> evidence, double gamma_frob,
                         FrobeniusMode mode = FrobeniusMode::scaled);

struct TotalLoss {
  double value = 0.0;
  double ace_mean = 0.0;  // mean over views of loss_ace
  double kl_mean = 0.0;   // mean over views of loss_kl
  double con = 0.0;
  double fused_acc = 0.0;
  double lambda_s = 0.0;
  std::vector<Tensor2D> view_grads;  // d value / d alpha^v
  Tensor2D fused_grad;               // d value / d alpha_fused (empty without a fused term)
};

/// (1/V) sum_v loss_acc(alpha^v) + lambda_t loss_con(alpha^v - 1) + loss_acc(alpha_fused).
/// The fused term is skipped when `fused_alpha` is null; the consistency term
/// needs at least two views and is skipped otherwise.
TotalLoss total_loss(std::span<const Tensor2D> per_view_alpha, const Tensor2D* fused_alpha,
                     const LabelBatch& y, std::size_t step, const LossConfig& config);

}  // namespace tuned::losses
