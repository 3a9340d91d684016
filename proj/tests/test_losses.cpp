#include <doctest.h>

#include <cmath>

#include <boost/math/special_functions/digamma.hpp>

#include "support.hpp"
#include "tuned/errors.hpp"
#include "tuned/losses.hpp"

using namespace tuned;
using losses::FrobeniusMode;
using losses::LabelBatch;
using boost::math::digamma;

namespace {

Tensor2D random_alpha(std::size_t n, std::size_t k, nn::Rng& rng) { return test::random_tensor(n, k, rng, 1.0, 10.0); }

LabelBatch random_labels(std::size_t n, std::size_t k, nn::Rng& rng) {
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.index(k));
  return LabelBatch::from_labels(labels, k);
}

double ace_oracle(const Tensor2D& alpha, const LabelBatch& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.rows(); ++i) {
    double s = 0.0;
    for (double a : alpha.row(i)) s += a;
    for (std::size_t j = 0; j < alpha.cols(); ++j) total += y.one_hot(i, j) * (digamma(s) - digamma(alpha(i, j)));
  }
  return total / alpha.rows();
}

/// KL[Dir(a) || Dir(1)] = ln Γ(S) − ln Γ(K) − Σ ln Γ(a_j) + Σ (a_j − 1)(ψ(a_j) − ψ(S)).
double kl_oracle(const Tensor2D& alpha, const LabelBatch& y) {
  double total = 0.0;
  const double k = static_cast<double>(alpha.cols());
  for (std::size_t i = 0; i < alpha.rows(); ++i) {
    std::vector<double> a(alpha.cols());
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = y.one_hot(i, j) + (1 - y.one_hot(i, j)) * alpha(i, j);
      s += a[j];
    }
    double kl = std::lgamma(s) - std::lgamma(k);
    for (double x : a) kl += -std::lgamma(x) + (x - 1) * (digamma(x) - digamma(s));
    total += kl;
  }
  return total / alpha.rows();
}

double con_oracle(const std::vector<Tensor2D>& e, double gamma, FrobeniusMode mode) {
  const std::size_t v = e.size(), n = e[0].rows(), k = e[0].cols();
  double cos_sum = 0.0;
  for (std::size_t a = 0; a < v; ++a)
    for (std::size_t b = a + 1; b < v; ++b)
      for (std::size_t r = 0; r < n; ++r) {
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t j = 0; j < k; ++j) {
          ab += e[a](r, j) * e[b](r, j);
          aa += e[a](r, j) * e[a](r, j);
          bb += e[b](r, j) * e[b](r, j);
        }
        if (aa > 0 && bb > 0) cos_sum += ab / std::sqrt(aa * bb) / n;
      }
  double spread = 0.0, frob = 0.0;
  for (const auto& m : e) {
    for (std::size_t j = 0; j < k; ++j) {
      double mu = 0.0;
      for (std::size_t r = 0; r < n; ++r) mu += m(r, j) / n;
      for (std::size_t r = 0; r < n; ++r) spread += (m(r, j) - mu) * (m(r, j) - mu);
    }
    frob += frobenius_sq(m);
  }
  const double vn = static_cast<double>(v * n);
  return -2.0 / (v * (v - 1.0)) * cos_sum + spread / vn - gamma * frob * (mode == FrobeniusMode::scaled ? 1 / vn : 1.0);
}

}  // namespace

TEST_CASE("accuracy loss reference values") {
  const auto y0 = LabelBatch::from_labels(std::vector<int>{0}, 3);
  CHECK(std::abs(losses::loss_ace(Tensor2D{{3, 1, 1}}, y0).value - 7.0 / 12) < 1e-12);
  const auto y2 = LabelBatch::from_labels(std::vector<int>{0}, 2);
  CHECK(std::abs(losses::loss_ace(Tensor2D{{1, 1}}, y2).value - 1.0) < 1e-12);
  CHECK_THROWS_AS(losses::loss_ace(Tensor2D{{0.5, 1}}, y2), ContractError);
  CHECK_THROWS_AS(losses::loss_ace(Tensor2D{{1, 1, 1}}, y2), ShapeError);
  CHECK_THROWS_AS(LabelBatch::from_labels(std::vector<int>{2}, 2), InputError);
}

TEST_CASE("kl reference values") {
  const auto y = LabelBatch::from_labels(std::vector<int>{0}, 3);
  CHECK(std::abs(losses::loss_kl(Tensor2D{{1, 1, 1}}, y).value) < 1e-12);
  // the true class is masked to one, leaving alpha~ = [2, 1, 1]
  CHECK(std::abs(losses::loss_kl(Tensor2D{{2, 1, 5}}, LabelBatch::from_labels(std::vector<int>{2}, 3)).value -
                 (std::log(3.0) - 5.0 / 6)) < 1e-12);
}

TEST_CASE("losses match their closed forms") {
  nn::Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(6), k = 2 + rng.index(7);
    const auto alpha = random_alpha(n, k, rng);
    const auto y = random_labels(n, k, rng);
    const double ace = losses::loss_ace(alpha, y).value;
    const double kl = losses::loss_kl(alpha, y).value;
    CHECK(std::abs(ace - ace_oracle(alpha, y)) < 1e-10);
    CHECK(std::abs(kl - kl_oracle(alpha, y)) < 1e-10);
    CHECK(ace >= 0.0);
    CHECK(kl >= 0.0);
  }
}

TEST_CASE("kl is nonnegative on random alpha") {
  nn::Rng rng(32);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.index(10);
    const auto alpha = test::random_tensor(1, k, rng, 1.0, 30.0);
    CHECK(losses::loss_kl(alpha, random_labels(1, k, rng)).value >= 0.0);
  }
}

TEST_CASE("accuracy loss shrinks as the true class dominates") {
  const auto y = LabelBatch::from_labels(std::vector<int>{1}, 3);
  double last = losses::loss_ace(Tensor2D{{1, 1, 1}}, y).value;
  for (double e : {1.0, 10.0, 100.0, 1e4}) {
    const double v = losses::loss_ace(Tensor2D{{1, 1 + e, 1}}, y).value;
    CHECK(v < last);
    last = v;
  }
  CHECK(last < 1e-3);
}

TEST_CASE("annealing coefficient") {
  CHECK(losses::lambda_s(0, 10) == 0.0);
  CHECK(losses::lambda_s(5, 10) == 0.5);
  CHECK(losses::lambda_s(20, 10) == 1.0);
  const Tensor2D alpha{{3, 2, 1}};
  const auto y = LabelBatch::from_labels(std::vector<int>{1}, 3);
  const double ace = losses::loss_ace(alpha, y).value, kl = losses::loss_kl(alpha, y).value;
  CHECK(losses::loss_acc(alpha, y, 0, 10).value == ace);
  CHECK(std::abs(losses::loss_acc(alpha, y, 10, 10).value - (ace + kl)) < 1e-15);
  CHECK(std::abs(losses::loss_acc(alpha, y, 30, 10).value - (ace + kl)) < 1e-15);
}

TEST_CASE("consistency loss reference value and closed form") {
  const std::vector<Tensor2D> e{Tensor2D{{1, 0}}, Tensor2D{{1, 0}}};
  const auto c = losses::loss_con(e, 1.0, FrobeniusMode::literal);
  CHECK(std::abs(c.value + 3.0) < 1e-15);
  CHECK(std::abs(c.cosine_term + 1.0) < 1e-15);
  CHECK(c.variance_term == 0.0);
  CHECK(std::abs(c.frobenius_term + 2.0) < 1e-15);

  const std::vector<Tensor2D> zero{Tensor2D{{0, 0}}, Tensor2D{{1, 0}}};
  CHECK(losses::loss_con(zero, 0.0).cosine_term == 0.0);
  CHECK_THROWS_AS(losses::loss_con(std::vector<Tensor2D>{Tensor2D{{1}}}, 0.1), ConfigError);

  nn::Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t v = 2 + rng.index(4), n = 1 + rng.index(6), k = 2 + rng.index(5);
    std::vector<Tensor2D> ev;
    for (std::size_t i = 0; i < v; ++i) ev.push_back(test::random_tensor(n, k, rng, 0.0, 5.0));
    for (const auto mode : {FrobeniusMode::scaled, FrobeniusMode::literal}) {
      CHECK(std::abs(losses::loss_con(ev, 0.01, mode).value - con_oracle(ev, 0.01, mode)) < 1e-10);
    }
  }
}

TEST_CASE("accuracy and kl gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    nn::Rng rng(seed);
    const std::size_t n = 1 + rng.index(6), k = 2 + rng.index(7);
    const auto alpha = random_alpha(n, k, rng);
    const auto y = random_labels(n, k, rng);
    const auto ace = losses::loss_ace(alpha, y);
    CHECK(test::max_rel_error(ace.grad, test::numeric_gradient(
                                            [&](const Tensor2D& a) { return losses::loss_ace(a, y).value; }, alpha)) <
          1e-4);
    const auto kl = losses::loss_kl(alpha, y);
    CHECK(test::max_rel_error(kl.grad, test::numeric_gradient(
                                           [&](const Tensor2D& a) { return losses::loss_kl(a, y).value; }, alpha)) <
          1e-4);
    const std::size_t step = rng.index(20), t = 1 + rng.index(10);
    const auto acc = losses::loss_acc(alpha, y, step, t);
    CHECK(test::max_rel_error(acc.grad, test::numeric_gradient(
                                            [&](const Tensor2D& a) { return losses::loss_acc(a, y, step, t).value; },
                                            alpha)) < 1e-4);
  }
}

TEST_CASE("consistency gradients match central differences") {
  for (const auto mode : {FrobeniusMode::scaled, FrobeniusMode::literal}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      nn::Rng rng(seed);
      const std::size_t v = 2 + rng.index(3), n = 1 + rng.index(5), k = 2 + rng.index(5);
      std::vector<Tensor2D> ev;
      for (std::size_t i = 0; i < v; ++i) ev.push_back(test::random_tensor(n, k, rng, 0.1, 5.0));
      const auto con = losses::loss_con(ev, 0.01, mode);
      for (std::size_t i = 0; i < v; ++i) {
        const auto f = [&](const Tensor2D& x) {
          auto probe = ev;
          probe[i] = x;
          return losses::loss_con(probe, 0.01, mode).value;
        };
        CHECK(test::max_rel_error(con.grads[i], test::numeric_gradient(f, ev[i])) < 1e-4);
      }
    }
  }
}

TEST_CASE("total loss gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    nn::Rng rng(seed);
    const std::size_t v = 1 + rng.index(4), n = 1 + rng.index(5), k = 2 + rng.index(5);
    std::vector<Tensor2D> alphas;
    for (std::size_t i = 0; i < v; ++i) alphas.push_back(random_alpha(n, k, rng));
    const auto fused = random_alpha(n, k, rng);
    const auto y = random_labels(n, k, rng);
    losses::LossConfig config;
    config.lambda_t = rng.uniform(0.0, 2.0);
    config.anneal_steps = 1 + rng.index(10);
    const std::size_t step = rng.index(15);
    const bool with_fused = rng.uniform() < 0.7;
    const auto total = losses::total_loss(alphas, with_fused ? &fused : nullptr, y, step, config);
    for (std::size_t i = 0; i < v; ++i) {
      const auto f = [&](const Tensor2D& x) {
        auto probe = alphas;
        probe[i] = x;
        return losses::total_loss(probe, with_fused ? &fused : nullptr, y, step, config).value;
      };
      CHECK(test::max_rel_error(total.view_grads[i], test::numeric_gradient(f, alphas[i])) < 1e-4);
    }
    if (with_fused) {
      const auto f = [&](const Tensor2D& x) { return losses::total_loss(alphas, &x, y, step, config).value; };
      CHECK(test::max_rel_error(total.fused_grad, test::numeric_gradient(f, fused)) < 1e-4);
    }
  }
}

TEST_CASE("total loss reductions") {
  nn::Rng rng(34);
  const auto y = random_labels(4, 3, rng);
  const std::vector<Tensor2D> one{random_alpha(4, 3, rng)};
  losses::LossConfig config;
  config.lambda_t = 0.0;
  CHECK(std::abs(losses::total_loss(one, nullptr, y, 7, config).value -
                 losses::loss_acc(one[0], y, 7, config.anneal_steps).value) < 1e-15);
  const std::vector<Tensor2D> two{random_alpha(4, 3, rng), random_alpha(4, 3, rng)};
  const double mean_acc = (losses::loss_acc(two[0], y, 7, config.anneal_steps).value +
                           losses::loss_acc(two[1], y, 7, config.anneal_steps).value) /
                          2;
  CHECK(std::abs(losses::total_loss(two, nullptr, y, 7, config).value - mean_acc) < 1e-14);
  config.lambda_t = -1.0;
  CHECK_THROWS_AS(losses::total_loss(two, nullptr, y, 7, config), ConfigError);
}
