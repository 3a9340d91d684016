#include <doctest.h>

#include "support.hpp"
#include "tuned/errors.hpp"
#include "tuned/metrics.hpp"

using namespace tuned;
using namespace tuned::pipeline;

namespace {

/// Mann-Whitney estimate: P(score_pos > score_neg) + P(tie) / 2.
double auc_oracle(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("accuracy and macro f1") {
  const std::vector<int> truth{0, 1, 2, 1, 0};
  CHECK(accuracy(truth, truth) == 1.0);
  CHECK(macro_f1(truth, truth, 3) == 1.0);
  const std::vector<int> pred{0, 2, 2, 1, 1};
  CHECK(accuracy(pred, truth) == 0.6);
  // class 0: tp 1 fp 0 fn 1 -> 2/3; class 1: tp 1 fp 1 fn 1 -> 1/2; class 2: tp 1 fp 1 fn 0 -> 2/3
  CHECK(std::abs(macro_f1(pred, truth, 3) - (2.0 / 3 + 0.5 + 2.0 / 3) / 3) < 1e-15);
}

TEST_CASE("absent classes count as zero with a warning") {
  const std::vector<int> truth{0, 0, 1}, pred{0, 0, 1};
  std::vector<std::string> warnings;
  CHECK(std::abs(macro_f1(pred, truth, 3, &warnings) - 2.0 / 3) < 1e-15);
  CHECK(warnings.size() == 1);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax_rows(Tensor2D{{1, 3, 3}, {2, 2, 2}}) == std::vector<int>{1, 0});
}

TEST_CASE("binary auc") {
  const std::vector<double> perfect{0, 1, 1, 0};
  const std::vector<bool> labels{false, true, true, false};
  CHECK(binary_auc(perfect, labels) == 1.0);
  const std::vector<double> flat(4, 0.3);
  CHECK(binary_auc(flat, labels) == 0.5);
  CHECK_THROWS_AS(binary_auc(perfect, std::vector<bool>(4, true)), InputError);

  nn::Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(6));  // plenty of ties
      pos[i] = rng.uniform() < 0.5;
    }
    pos[0] = true;
    pos[1] = false;
    CHECK(std::abs(binary_auc(s, pos) - auc_oracle(s, pos)) < 1e-12);
  }
}

TEST_CASE("random scores give chance auc") {
  nn::Rng rng(52);
  std::vector<double> s(1000);
  std::vector<bool> pos(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    s[i] = rng.uniform();
    pos[i] = i % 2 == 0;
  }
  CHECK(std::abs(binary_auc(s, pos) - 0.5) < 0.05);
}

TEST_CASE("one-vs-rest auc skips degenerate classes") {
  const Tensor2D scores{{0.9, 0.1, 0.0}, {0.2, 0.8, 0.0}, {0.7, 0.3, 0.0}};
  const std::vector<int> truth{0, 1, 0};
  std::vector<std::string> warnings;
  CHECK(one_vs_rest_auc(scores, truth, &warnings) == 1.0);
  CHECK(warnings.size() == 1);
}

TEST_CASE("metrics from evidence") {
  const Tensor2D e{{9, 0}, {0, 9}, {1, 1}};
  const std::vector<int> truth{0, 1, 0};
  const auto m = classification_metrics(e, truth);
  CHECK(m.accuracy == 1.0);
  CHECK(std::abs(m.mean_uncertainty - (2.0 / 11 + 2.0 / 11 + 0.5) / 3) < 1e-15);
  CHECK(m.auc == 1.0);
}
