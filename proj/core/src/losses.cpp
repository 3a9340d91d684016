#include "tuned/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tuned/errors.hpp"
#include "tuned/special.hpp"

namespace tuned::losses {
namespace {

void check_alpha(const Tensor2D& alpha, const LabelBatch& y, const char* what) {
  if (!alpha.same_shape(y.one_hot)) {
    throw ShapeError(std::string(what) + ": alpha " + alpha.shape() + " vs labels " + y.one_hot.shape());
  }
  for (double a : alpha.values()) {
    if (!(a >= 1.0) || !std::isfinite(a)) {
      throw ContractError(std::string(what) + ": Dirichlet parameters must be finite and >= 1, got " +
                          std::to_string(a));
    }
  }
}

}  // namespace

std::string_view to_string(FrobeniusMode mode) { return mode == FrobeniusMode::scaled ? "scaled" : "literal"; }

FrobeniusMode frobenius_mode_from_string(std::string_view name) {
  if (name == "scaled") return FrobeniusMode::scaled;
  if (name == "literal") return FrobeniusMode::literal;
  throw ConfigError("unknown Frobenius mode '" + std::string(name) + "' (expected scaled or literal)");
}

void LossConfig::validate() const {
  if (anneal_steps < 1) throw ConfigError("anneal_steps must be >= 1");
  if (!(lambda_t >= 0.0)) throw ConfigError("lambda_t must be >= 0");
  if (!(gamma_frob >= 0.0 && gamma_frob <= 1.0)) throw ConfigError("gamma_frob must lie in [0, 1]");
  if (!(evidence_clip > 0.0)) throw ConfigError("evidence_clip must be > 0");
}

LabelBatch LabelBatch::from_labels(std::span<const int> labels, std::size_t num_classes) {
  LabelBatch y{Tensor2D(labels.size(), num_classes)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw InputError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    y.one_hot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return y;
}

LossValue loss_ace(const Tensor2D& alpha, const LabelBatch& y) {
  check_alpha(alpha, y, "loss_ace");
  const std::size_t n = alpha.rows(), k = alpha.cols();
  LossValue out{0.0, Tensor2D(n, k)};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0, y_total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      s += alpha(i, j);
      y_total += y.one_hot(i, j);
    }
    const double psi_s = nn::digamma(s);
    const double tri_s = nn::trigamma(s);
    for (std::size_t j = 0; j < k; ++j) {
      const double yj = y.one_hot(i, j);
      if (yj != 0.0) out.value += yj * (psi_s - nn::digamma(alpha(i, j)));
      out.grad(i, j) = (y_total * tri_s - (yj != 0.0 ? yj * nn::trigamma(alpha(i, j)) : 0.0)) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

LossValue loss_kl(const Tensor2D& alpha, const LabelBatch& y) {
  check_alpha(alpha, y, "loss_kl");
  const std::size_t n = alpha.rows(), k = alpha.cols();
  LossValue out{0.0, Tensor2D(n, k)};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double kk = static_cast<double>(k);
  const double lgamma_k = nn::lgamma(kk);
  std::vector<double> tilde(k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double yj = y.one_hot(i, j);
      tilde[j] = yj + (1.0 - yj) * alpha(i, j);
      s += tilde[j];
    }
    const double psi_s = nn::digamma(s);
    const double tri_s = nn::trigamma(s);
    double value = nn::lgamma(s) - lgamma_k;
    for (std::size_t j = 0; j < k; ++j) {
      value += -nn::lgamma(tilde[j]) + (tilde[j] - 1.0) * (nn::digamma(tilde[j]) - psi_s);
      const double d_tilde = (tilde[j] - 1.0) * nn::trigamma(tilde[j]) - (s - kk) * tri_s;
      out.grad(i, j) = d_tilde * (1.0 - y.one_hot(i, j)) * inv_n;
    }
    out.value += value;
  }
  out.value *= inv_n;
  return out;
}

double lambda_s(std::size_t step, std::size_t anneal_steps) {
  if (anneal_steps < 1) throw ConfigError("lambda_s: anneal_steps must be >= 1");
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(anneal_steps));
}

LossValue loss_acc(const Tensor2D& alpha, const LabelBatch& y, std::size_t step, std::size_t anneal_steps) {
  const double ls = lambda_s(step, anneal_steps);
  LossValue ace = loss_ace(alpha, y);
  if (ls == 0.0) return ace;
  LossValue kl = loss_kl(alpha, y);
  ace.value += ls * kl.value;
  ace.grad += kl.grad * ls;
  return ace;
}

ConsistencyLoss loss_con(std::span<const Tensor2D> evidence, double gamma_frob, FrobeniusMode mode) {
  const std::size_t v = evidence.size();
  if (v < 2) throw ConfigError("loss_con: need at least 2 views, got " + std::to_string(v));
  for (const auto& e : evidence) require_same_shape(e, evidence[0], "loss_con");
  const std::size_t n = evidence[0].rows(), k = evidence[0].cols();
  ConsistencyLoss out;
  out.grads.assign(v, Tensor2D(n, k));
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double vn = static_cast<double>(v) * static_cast<double>(n);

  // pairwise cosine term
  const double pair_scale = -2.0 / (static_cast<double>(v) * static_cast<double>(v - 1));
  std::vector<double> norms(v);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t a = 0; a < v; ++a) {
      double s = 0.0;
      for (double x : evidence[a].row(r)) s += x * x;
      norms[a] = std::sqrt(s);
    }
    for (std::size_t a = 0; a < v; ++a) {
      for (std::size_t b = a + 1; b < v; ++b) {
        if (norms[a] == 0.0 || norms[b] == 0.0) continue;
        auto ea = evidence[a].row(r);
        auto eb = evidence[b].row(r);
        double ab = 0.0;
        for (std::size_t j = 0; j < k; ++j) ab += ea[j] * eb[j];
        const double nanb = norms[a] * norms[b];
        const double cos = ab / nanb;
        out.cosine_term += pair_scale * cos * inv_n;
        const double c = pair_scale * inv_n;
        auto ga = out.grads[a].row(r);
        auto gb = out.grads[b].row(r);
        for (std::size_t j = 0; j < k; ++j) {
          ga[j] += c * (eb[j] / nanb - cos * ea[j] / (norms[a] * norms[a]));
          gb[j] += c * (ea[j] / nanb - cos * eb[j] / (norms[b] * norms[b]));
        }
      }
    }
  }

  // within-view spread around the view mean
  for (std::size_t a = 0; a < v; ++a) {
    std::vector<double> mu(k, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < k; ++j) mu[j] += evidence[a](r, j) * inv_n;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const double d = evidence[a](r, j) - mu[j];
        out.variance_term += d * d / vn;
        out.grads[a](r, j) += 2.0 * d / vn;
      }
    }
  }

  // Frobenius regularizer
  const double frob_scale = gamma_frob * (mode == FrobeniusMode::scaled ? 1.0 / vn : 1.0);
  for (std::size_t a = 0; a < v; ++a) {
    out.frobenius_term -= frob_scale * frobenius_sq(evidence[a]);
    for (std::size_t i = 0; i < out.grads[a].size(); ++i) {
      out.grads[a].data()[i] -= 2.0 * frob_scale * evidence[a].data()[i];
    }
  }

  out.value = out.cosine_term + out.variance_term + out.frobenius_term;
  return out;
}

TotalLoss total_loss(std::span<const Tensor2D> per_view_alpha, const Tensor2D* fused_alpha,
                     const LabelBatch& y, std::size_t step, const LossConfig& config) {
  config.validate();
  const std::size_t v = per_view_alpha.size();
  if (v == 0) throw ConfigError("total_loss: no views");
  TotalLoss out;
  out.lambda_s = lambda_s(step, config.anneal_steps);
  const double inv_v = 1.0 / static_cast<double>(v);
  out.view_grads.reserve(v);
  for (const auto& alpha : per_view_alpha) {
    LossValue ace = loss_ace(alpha, y);
    out.ace_mean += ace.value * inv_v;
    LossValue acc = std::move(ace);
    LossValue kl = loss_kl(alpha, y);
    out.kl_mean += kl.value * inv_v;
    if (out.lambda_s > 0.0) {
      acc.value += out.lambda_s * kl.value;
      acc.grad += kl.grad * out.lambda_s;
    }
    out.value += acc.value * inv_v;
    out.view_grads.push_back(acc.grad * inv_v);
  }

  if (config.lambda_t > 0.0 && v >= 2) {
    std::vector<Tensor2D> evidence;
    evidence.reserve(v);
    for (const auto& alpha : per_view_alpha) {
      Tensor2D e = alpha;
      for (double& x : e.values()) x -= 1.0;
      evidence.push_back(std::move(e));
    }
    ConsistencyLoss con = loss_con(evidence, config.gamma_frob, config.frobenius);
    out.con = con.value;
    out.value += config.lambda_t * con.value;
    for (std::size_t a = 0; a < v; ++a) out.view_grads[a] += con.grads[a] * config.lambda_t;
  }

  if (fused_alpha != nullptr) {
    LossValue fused = loss_acc(*fused_alpha, y, step, config.anneal_steps);
    out.fused_acc = fused.value;
    out.value += fused.value;
    out.fused_grad = std::move(fused.grad);
  }
  return out;
}

}  // namespace tuned::losses
