#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tuned/dataset.hpp"
#include "tuned/model.hpp"

namespace tuned::cli {

/// Everything a command needs: where the data comes from, which seeds to run,
/// where outputs go, and the model hyperparameters.
///
/// Config files are flat `key = value` lines; `#` starts a comment. Keys:
///
///   data             dataset directory; empty means synthetic data   (empty)
///   manifest         manifest file name inside `data`                 (manifest.txt)
///   samples          synthetic sample count                           (1000)
///   views            synthetic view count                             (3)
///   classes          synthetic class count                            (5)
///   dim              synthetic features per view                      (16)
///   informativeness  synthetic per-view separation, comma separated   (3 for every view)
///   data_seed        synthetic/split seed; `run` uses the run seed    (run)
///   test_fraction    test share when no split file exists             (0.2)
///   conflict         conflict spec, e.g. noise:views=0:sigma=1.0      (none)
///   seeds            `1`, `1..10` or `1,4,7`                          (1)
///   out              output directory                                 (tuned_out)
///
/// plus every model key accepted by pipeline::set_model_key.
struct RunConfig {
  std::string data;
  std::string manifest = "manifest.txt";
  pipeline::SyntheticSpec synthetic;
  std::optional<std::uint64_t> data_seed;
  double test_fraction = 0.2;
  std::string conflict;
  std::vector<std::uint64_t> seeds{1};
  std::string out = "tuned_out";
  pipeline::ModelConfig model;
};

/// Applies one key. Throws ConfigError on an unknown key or a bad value.
void set_key(RunConfig& config, std::string_view key, std::string_view value);

/// Reads a config file. Diagnostics carry `path:line:`.
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key=value` overrides (leading dashes allowed).
void apply_override(RunConfig& config, std::string_view arg);

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);

/// `1`, `1..10`, `1,4,7`.
std::vector<std::uint64_t> parse_seeds(std::string_view text);

/// `noise:views=0:sigma=1.0`, `swap:views=0,2`.
pipeline::ConflictSpec parse_conflict(std::string_view text);

/// The dataset used for one seed: loaded from `data` or generated.
pipeline::MultiViewDataset make_dataset(const RunConfig& config, std::uint64_t seed);

}  // namespace tuned::cli
