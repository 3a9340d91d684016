#include "tuned/train.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <spdlog/spdlog.h>

namespace tuned::pipeline {
namespace {

bool parameters_finite(ModelBundle& model) {
  for (const auto* p : model.parameters()) {
    if (!all_finite(p->value)) return false;
  }
  return true;
}

}  // namespace

TrainResult train(const MultiViewDataset& data, const ModelConfig& config, std::uint64_t seed) {
  data.validate();
  if (data.train_index.empty()) throw InputError("train split is empty");
  std::vector<std::size_t> dims;
  for (const auto& v : data.views) dims.push_back(v.cols());
  TrainResult result{ModelBundle(config, dims, data.num_classes, seed), {}, false};
  ModelBundle& model = result.model;
  model.attach_training_data(data.split_views(Split::train));
  const auto labels = data.split_labels(Split::train);

  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto last_good = model.parameter_values();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    StepStats stats;
    std::string cause;
    try {
      stats = model.train_step(labels, epoch);
    } catch (const DomainError& e) {
      cause = e.what();
    } catch (const ContractError& e) {
      cause = e.what();
    }
    const double loss = cause.empty() ? stats.loss.value : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(loss) || !parameters_finite(model)) {
      model.set_parameter_values(last_good);
      model.set_epochs_run(epoch - 1);
      const std::string what = "training diverged at epoch " + std::to_string(epoch) + " (" +
                               (cause.empty() ? "loss " + std::to_string(loss) : cause) + "); restored the epoch " +
                               std::to_string(epoch - 1) + " parameters";
      spdlog::error(what);
      throw DivergenceError(what, epoch, std::make_shared<const ModelBundle>(model));
    }
    last_good = model.parameter_values();
    EpochLog row;
    row.epoch = epoch;
    row.loss_total = loss;
    row.loss_ace_mean = stats.loss.ace_mean;
    row.loss_kl_mean = stats.loss.kl_mean;
    row.loss_con = stats.loss.con;
    row.lambda_s = stats.loss.lambda_s;
    row.train_acc = stats.train_accuracy;
    if (stats.graph) row.smrf_weights = stats.graph->weights;
    result.log.push_back(std::move(row));
    model.set_epochs_run(epoch);

    if (epoch <= config.loss.anneal_steps) continue;
    if (since_best == 0 && best == std::numeric_limits<double>::infinity()) {
      best = loss;
    } else if (loss < best - 1e-6 * std::abs(best)) {
      best = loss;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      result.early_stopped = true;
      spdlog::debug("early stop at epoch {}", epoch);
      break;
    }
  }
  return result;
}

MetricsReport evaluate(const ModelBundle& model, const MultiViewDataset& data, Split split) {
  const auto& index = data.indices(split);
  if (index.empty()) throw InputError("cannot evaluate an empty " + std::string(to_string(split)) + " split");
  if (data.num_classes != model.num_classes()) {
    throw ShapeError("dataset has " + std::to_string(data.num_classes) + " classes but the model expects " +
                     std::to_string(model.num_classes()));
  }
  const Prediction p = split == Split::train && data.split_views(Split::train) == model.train_views()
                           ? model.predict_train()
                           : model.predict(data.split_views(split));
  const auto labels = data.split_labels(split);
  MetricsReport report;
  report.samples = labels.size();
  report.fused = classification_metrics(p.fused.evidence, labels, &report.warnings);
  for (const auto& e : p.view_evidence) report.per_view.push_back(classification_metrics(e, labels, nullptr));
  report.graph = p.fused.graph;
  for (const auto& w : report.warnings) spdlog::warn(w);
  return report;
}

void write_epoch_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,loss_total,loss_ace_mean,loss_kl_mean,loss_con,lambda_s,train_acc\n";
  out.precision(10);
  for (const auto& r : log) {
    out << r.epoch << ',' << r.loss_total << ',' << r.loss_ace_mean << ',' << r.loss_kl_mean << ',' << r.loss_con
        << ',' << r.lambda_s << ',' << r.train_acc << '\n';
  }
}

void write_graph_snapshots_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,i,j,weight\n";
  out.precision(10);
  for (const auto& r : log) {
    for (std::size_t i = 0; i < r.smrf_weights.rows(); ++i)
      for (std::size_t j = 0; j < r.smrf_weights.cols(); ++j)
        out << r.epoch << ',' << i << ',' << j << ',' << r.smrf_weights(i, j) << '\n';
  }
}

}  // namespace tuned::pipeline
