#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tuned/fusion.hpp"
#include "tuned/tensor.hpp"

namespace tuned::pipeline {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double auc = 0.0;  // one-vs-rest, macro over classes present in the split
  double mean_uncertainty = 0.0;
};

struct MetricsReport {
  ClassificationMetrics fused;
  std::vector<ClassificationMetrics> per_view;
  std::size_t samples = 0;
  std::vector<std::string> warnings;
  std::optional<fusion::FusionGraph> graph;
};

/// Row-wise argmax; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor2D& scores);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mean over all K classes of 2TP / (2TP + FP + FN). A class with no true
/// samples contributes 0 and adds a warning.
double macro_f1(std::span<const int> predicted, std::span<const int> truth, std::size_t num_classes,
                std::vector<std::string>* warnings = nullptr);

/// Trapezoidal ROC area for a binary problem; tied scores form one step.
/// Throws InputError when either class is missing.
double binary_auc(std::span<const double> scores, const std::vector<bool>& positive);

/// Macro one-vs-rest AUC over column scores. Classes with no positives or no
/// negatives in the split are skipped with a warning.
double one_vs_rest_auc(const Tensor2D& scores, std::span<const int> truth,
                       std::vector<std::string>* warnings = nullptr);

/// Accuracy, F1 and AUC from evidence via p = alpha / S, plus mean K / S.
ClassificationMetrics classification_metrics(const Tensor2D& evidence, std::span<const int> truth,
                                             std::vector<std::string>* warnings = nullptr);

}  // namespace tuned::pipeline
