#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tuned/metrics.hpp"
#include "tuned/train.hpp"
#include "tuned_cli/run_config.hpp"

namespace tuned::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count for multi-seed runs: TUNED_THREADS if set, else the hardware
/// concurrency, never more than `jobs`.
unsigned worker_count(std::size_t jobs);

nlohmann::json to_json(const pipeline::ClassificationMetrics& m);
nlohmann::json to_json(const pipeline::MetricsReport& report);
nlohmann::json to_json(const fusion::FusionGraph& graph);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
Summary summarize(const std::vector<double>& values);

}  // namespace tuned::cli
