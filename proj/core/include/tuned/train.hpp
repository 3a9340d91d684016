#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "tuned/dataset.hpp"
#include "tuned/errors.hpp"
#include "tuned/fusion.hpp"
#include "tuned/metrics.hpp"
#include "tuned/model.hpp"

namespace tuned::pipeline {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss_total = 0.0;
  double loss_ace_mean = 0.0;
  double loss_kl_mean = 0.0;
  double loss_con = 0.0;
  double lambda_s = 0.0;
  double train_acc = 0.0;
  /// V x V view similarity of the S-MRF graph (empty for other backends).
  Tensor2D smrf_weights;
};

struct TrainResult {
  ModelBundle model;
  std::vector<EpochLog> log;
  bool early_stopped = false;
};

/// Raised when the loss or a parameter becomes non-finite. Carries the model
/// as it was after the last finite epoch.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch, std::shared_ptr<const ModelBundle> last_good)
      : Error(what), epoch_(epoch), last_good_(std::move(last_good)) {}
  std::size_t epoch() const noexcept { return epoch_; }
  const std::shared_ptr<const ModelBundle>& last_good() const noexcept { return last_good_; }

 private:
  std::size_t epoch_;
  std::shared_ptr<const ModelBundle> last_good_;
};

/// Full-batch training on the train split. Early stopping kicks in once the
/// annealing ramp is over: training ends when the total loss has not improved
/// for `patience` epochs.
TrainResult train(const MultiViewDataset& data, const ModelConfig& config, std::uint64_t seed);

MetricsReport evaluate(const ModelBundle& model, const MultiViewDataset& data, Split split);

/// Header `epoch,loss_total,loss_ace_mean,loss_kl_mean,loss_con,lambda_s,train_acc`.
void write_epoch_log_csv(std::ostream& out, const std::vector<EpochLog>& log);
/// `epoch,i,j,weight` rows of the per-epoch S-MRF similarity snapshots.
void write_graph_snapshots_csv(std::ostream& out, const std::vector<EpochLog>& log);

}  // namespace tuned::pipeline
