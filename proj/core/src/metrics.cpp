#include "tuned/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "tuned/errors.hpp"
#include "tuned/evidence.hpp"

namespace tuned::pipeline {

std::vector<int> argmax_rows(const Tensor2D& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) throw InputError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double macro_f1(std::span<const int> predicted, std::span<const int> truth, std::size_t num_classes,
                std::vector<std::string>* warnings) {
  if (predicted.size() != truth.size()) throw ShapeError("macro_f1: length mismatch");
  if (num_classes == 0) throw InputError("macro_f1: no classes");
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes), support(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= num_classes || p >= num_classes) throw InputError("macro_f1: label out of range");
    ++support[t];
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (support[c] == 0) {
      if (warnings) warnings->push_back("class " + std::to_string(c) + " absent from split; its F1 counts as 0");
      continue;
    }
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    total += 2.0 * static_cast<double>(tp[c]) / denom;
  }
  return total / static_cast<double>(num_classes);
}

double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("binary_auc: length mismatch");
  const auto pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t neg = positive.size() - pos;
  if (pos == 0 || neg == 0) throw InputError("binary_auc: need both positive and negative samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Twice the area in units of 1/(pos*neg); integer arithmetic keeps it exact.
  std::uint64_t doubled = 0, tp_total = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::uint64_t tp = 0, fp = 0;
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]]) ++tp;
      else ++fp;
      ++j;
    }
    doubled += fp * (2 * tp_total + tp);
    tp_total += tp;
    i = j;
  }
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double one_vs_rest_auc(const Tensor2D& scores, std::span<const int> truth, std::vector<std::string>* warnings) {
  if (scores.rows() != truth.size()) throw ShapeError("one_vs_rest_auc: length mismatch");
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> column(truth.size());
  std::vector<bool> positive(truth.size());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      column[i] = scores(i, c);
      positive[i] = truth[i] == static_cast<int>(c);
      pos += positive[i] ? 1 : 0;
    }
    if (pos == 0 || pos == truth.size()) {
      if (warnings) warnings->push_back("class " + std::to_string(c) + " skipped in AUC (no positives or no negatives)");
      continue;
    }
    total += binary_auc(column, positive);
    ++used;
  }
  if (used == 0) {
    if (warnings) warnings->push_back("AUC undefined for this split; reported as 0.5");
    return 0.5;
  }
  return total / static_cast<double>(used);
}

ClassificationMetrics classification_metrics(const Tensor2D& evidence, std::span<const int> truth,
                                             std::vector<std::string>* warnings) {
  if (evidence.rows() != truth.size()) throw ShapeError("metrics: evidence rows do not match labels");
  const Tensor2D prob = evidence::expected_probability(evidence);
  const auto predicted = argmax_rows(prob);
  ClassificationMetrics m;
  m.accuracy = accuracy(predicted, truth);
  m.macro_f1 = macro_f1(predicted, truth, evidence.cols(), warnings);
  m.auc = one_vs_rest_auc(prob, truth, warnings);
  const auto u = evidence::uncertainty(evidence);
  m.mean_uncertainty = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
  return m;
}

}  // namespace tuned::pipeline
