#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tuned/rng.hpp"
#include "tuned/tensor.hpp"

namespace tuned::pipeline {

enum class Split { train, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

/// V feature tables over the same n samples, integer labels in [0, K), and a
/// disjoint covering train/test partition of the row indices.
struct MultiViewDataset {
  std::vector<Tensor2D> views;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_views() const noexcept { return views.size(); }
  const std::vector<std::size_t>& indices(Split split) const {
    return split == Split::train ? train_index : test_index;
  }

  /// Throws InputError on any broken invariant.
  void validate() const;

  /// Rows of every view for one split.
  std::vector<Tensor2D> split_views(Split split) const;
  std::vector<int> split_labels(Split split) const;
};

/// Stratified shuffle split; every class keeps at least one training row.
void stratified_split(MultiViewDataset& data, double test_fraction, std::uint64_t seed);

/// Per-view z-scoring with means and standard deviations fitted on the train
/// split. Constant columns are centered only.
void standardize(MultiViewDataset& data);

struct LoadOptions {
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  bool standardize = true;
};

/// Reads a dataset directory described by a key-value manifest:
///
///   views  = 2            # optional, inferred from view_<i> keys
///   view_0 = view_0.csv
///   view_1 = view_1.csv
///   labels = labels.csv
///   split  = split.csv    # optional; one of train/test (or 0/1) per row
///   classes = 10          # optional, defaults to max label + 1
///   header = false        # optional, skip the first line of every CSV
///
/// View CSVs hold one sample per row. Without a split file a stratified split
/// is drawn from `options`.
MultiViewDataset load_multiview_csv(const std::filesystem::path& dir,
                                    const std::string& manifest = "manifest.txt",
                                    const LoadOptions& options = {});

/// Writes the manifest, view CSVs, labels.csv and split.csv.
void save_multiview_csv(const MultiViewDataset& data, const std::filesystem::path& dir);

/// Parses one numeric CSV file into a matrix.
Tensor2D read_numeric_csv(const std::filesystem::path& file, bool header = false);

struct SyntheticSpec {
  std::size_t samples = 1000;
  std::size_t views = 3;
  std::size_t classes = 5;
  std::size_t dim = 16;
  /// Cluster separation per view; 0 means the view carries no label signal.
  std::vector<double> informativeness;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

/// Gaussian class clusters per view: x = s_v * mu_{v,y} + N(0, I), with unit-norm
/// random class centres mu_{v,c}. The result is split and standardized.
MultiViewDataset gen_synthetic(const SyntheticSpec& spec);

enum class ConflictMode { noise, swap };

std::string_view to_string(ConflictMode mode);
ConflictMode conflict_mode_from_string(std::string_view name);

struct ConflictSpec {
  ConflictMode mode = ConflictMode::noise;
  std::vector<std::size_t> views;
  double sigma = 1.0;
};

/// Source row (any split) for every test row, drawn uniformly among rows of a
/// different class. Used by swap-mode injection; exposed for verification.
std::vector<std::size_t> draw_swap_sources(const MultiViewDataset& data, nn::Rng& rng);

/// Corrupts the targeted views on the test split only.
///   noise: adds N(0, sigma^2) to every test feature of the view
///   swap:  replaces each test row with the same view's row from a sample of a
///          different class (one source per row, shared across targeted views)
MultiViewDataset inject_conflict(const MultiViewDataset& data, const ConflictSpec& spec, std::uint64_t seed);

}  // namespace tuned::pipeline
