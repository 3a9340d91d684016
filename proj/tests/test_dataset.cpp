#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"
#include "tuned/dataset.hpp"
#include "tuned/errors.hpp"

using namespace tuned;
using namespace tuned::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tuned_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_toy(const fs::path& dir) {
  write(dir / "manifest.txt", "# toy\nview_0 = a.csv\nview_1 = b.csv\nlabels = y.csv\nsplit = s.csv\n");
  write(dir / "a.csv", "1,2\n3,4\n5,6\n7,8\n");
  write(dir / "b.csv", "1\n0\n1\n0\n");
  write(dir / "y.csv", "0\n1\n0\n1\n");
  write(dir / "s.csv", "train\ntrain\ntest\ntest\n");
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("toy directory loads") {
  TempDir dir("toy");
  write_toy(dir.path);
  LoadOptions raw;
  raw.standardize = false;
  const auto data = load_multiview_csv(dir.path, "manifest.txt", raw);
  CHECK(data.size() == 4);
  CHECK(data.num_views() == 2);
  CHECK(data.num_classes == 2);
  CHECK(data.views[0] == Tensor2D{{1, 2}, {3, 4}, {5, 6}, {7, 8}});
  CHECK(data.train_index == std::vector<std::size_t>{0, 1});
  CHECK(data.test_index == std::vector<std::size_t>{2, 3});
}

TEST_CASE("ingestion errors name files and lines") {
  TempDir dir("errors");
  write_toy(dir.path);
  write(dir.path / "b.csv", "1\n0\n1\n");
  const auto mismatch = error_of([&] { load_multiview_csv(dir.path); });
  CHECK(mismatch.find("row-count mismatch") != std::string::npos);
  CHECK(mismatch.find("a.csv") != std::string::npos);
  CHECK(mismatch.find("b.csv") != std::string::npos);

  write_toy(dir.path);
  write(dir.path / "a.csv", "1,2\n3,x\n5,6\n7,8\n");
  const auto cell = error_of([&] { load_multiview_csv(dir.path); });
  CHECK(cell.find("a.csv:2") != std::string::npos);

  write_toy(dir.path);
  write(dir.path / "a.csv", "1,2\n3\n5,6\n7,8\n");
  CHECK(error_of([&] { load_multiview_csv(dir.path); }).find("a.csv:2: expected 2 columns") != std::string::npos);

  write_toy(dir.path);
  write(dir.path / "manifest.txt", "view_0 = a.csv\nlabels = y.csv\ncolour = red\n");
  CHECK(error_of([&] { load_multiview_csv(dir.path); }).find(":3: unknown key 'colour'") != std::string::npos);

  write_toy(dir.path);
  write(dir.path / "y.csv", "0\n-1\n0\n1\n");
  CHECK_THROWS_AS(load_multiview_csv(dir.path), InputError);
}

TEST_CASE("save and load round trip") {
  TempDir dir("roundtrip");
  SyntheticSpec spec;
  spec.samples = 60;
  spec.views = 2;
  spec.classes = 3;
  spec.dim = 4;
  spec.seed = 3;
  const auto data = gen_synthetic(spec);
  save_multiview_csv(data, dir.path);
  LoadOptions raw;
  raw.standardize = false;
  const auto back = load_multiview_csv(dir.path, "manifest.txt", raw);
  CHECK(back.labels == data.labels);
  CHECK(back.train_index == data.train_index);
  for (std::size_t v = 0; v < 2; ++v) CHECK(max_abs_diff(back.views[v], data.views[v]) < 1e-12);
}

TEST_CASE("stratified split keeps every class in training") {
  nn::Rng rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    SyntheticSpec spec;
    spec.classes = 2 + rng.index(5);
    spec.samples = 4 * spec.classes + rng.index(100);
    spec.views = 1;
    spec.dim = 2;
    spec.seed = trial;
    spec.test_fraction = rng.uniform(0.1, 0.5);
    const auto data = gen_synthetic(spec);
    data.validate();
    std::set<int> train_classes;
    for (auto i : data.train_index) train_classes.insert(data.labels[i]);
    CHECK(train_classes.size() == spec.classes);
    CHECK(data.train_index.size() + data.test_index.size() == data.size());
  }
}

TEST_CASE("standardize fits on the train split") {
  SyntheticSpec spec;
  spec.samples = 200;
  spec.views = 1;
  spec.classes = 2;
  spec.dim = 3;
  const auto data = gen_synthetic(spec);
  const auto train = data.split_views(Split::train)[0];
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t r = 0; r < train.rows(); ++r) mean += train(r, c) / train.rows();
    for (std::size_t r = 0; r < train.rows(); ++r) sq += (train(r, c) - mean) * (train(r, c) - mean) / train.rows();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sq - 1.0) < 1e-12);
  }
}

TEST_CASE("synthetic generation is seeded and validated") {
  SyntheticSpec spec;
  spec.samples = 100;
  spec.seed = 5;
  CHECK(gen_synthetic(spec).views[0] == gen_synthetic(spec).views[0]);
  spec.samples = 10;
  CHECK_THROWS_AS(gen_synthetic(spec), ConfigError);
}

TEST_CASE("conflict injection touches only the targeted test rows") {
  SyntheticSpec spec;
  spec.samples = 100;
  spec.views = 3;
  spec.classes = 4;
  spec.seed = 8;
  const auto data = gen_synthetic(spec);

  CHECK(inject_conflict(data, {ConflictMode::noise, {}, 1.0}, 1).views == data.views);
  CHECK(inject_conflict(data, {ConflictMode::noise, {0}, 0.0}, 1).views == data.views);

  const auto noisy = inject_conflict(data, {ConflictMode::noise, {1}, 1.0}, 1);
  for (auto i : data.train_index)
    for (std::size_t v = 0; v < 3; ++v)
      for (std::size_t c = 0; c < data.views[v].cols(); ++c) CHECK(noisy.views[v](i, c) == data.views[v](i, c));
  std::size_t changed = 0;
  for (auto i : data.test_index) changed += noisy.views[1](i, 0) != data.views[1](i, 0);
  CHECK(changed == data.test_index.size());
  CHECK(noisy.views[0] == data.views[0]);

  const auto swapped = inject_conflict(data, {ConflictMode::swap, {0, 2}, 1.0}, 2);
  nn::Rng rng(2);
  const auto sources = draw_swap_sources(data, rng);
  for (std::size_t t = 0; t < data.test_index.size(); ++t) {
    const auto i = data.test_index[t];
    CHECK(data.labels[sources[t]] != data.labels[i]);
  }
  for (auto i : data.test_index) {
    bool found = false;
    for (std::size_t j = 0; j < data.size() && !found; ++j) {
      found = data.labels[j] != data.labels[i] &&
              std::equal(swapped.views[0].row(i).begin(), swapped.views[0].row(i).end(), data.views[0].row(j).begin()) &&
              std::equal(swapped.views[2].row(i).begin(), swapped.views[2].row(i).end(), data.views[2].row(j).begin());
    }
    CHECK(found);
  }
  CHECK(swapped.labels == data.labels);
  CHECK_THROWS_AS(inject_conflict(data, {ConflictMode::noise, {3}, 1.0}, 1), InputError);
}
