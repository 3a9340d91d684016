#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "tuned/errors.hpp"
#include "tuned/serialize.hpp"
#include "tuned/train.hpp"

using namespace tuned;
using namespace tuned::pipeline;
namespace fs = std::filesystem;

namespace {

MultiViewDataset small_data(std::uint64_t seed, std::size_t views = 2, std::vector<double> inf = {}) {
  SyntheticSpec spec;
  spec.samples = 120;
  spec.views = views;
  spec.classes = 3;
  spec.dim = 6;
  spec.seed = seed;
  spec.informativeness = std::move(inf);
  return gen_synthetic(spec);
}

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 12;
  c.k = 5;
  c.epochs = 40;
  c.loss.anneal_steps = 10;
  return c;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("config keys round trip through their string form") {
  ModelConfig c;
  for (const auto& [key, value] : model_config_entries(c)) CHECK(set_model_key(c, key, value));
  CHECK(model_config_entries(c) == model_config_entries(ModelConfig{}));
  CHECK_FALSE(set_model_key(c, "colour", "red"));
  CHECK_THROWS_AS(set_model_key(c, "lr", "fast"), ConfigError);
  c.fusion.tau = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training is deterministic in the seed") {
  const auto data = small_data(1);
  const auto a = train(data, small_config(), 7);
  const auto b = train(data, small_config(), 7);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss_total == b.log[i].loss_total);
    CHECK(a.log[i].train_acc == b.log[i].train_acc);
  }
  const auto c = train(data, small_config(), 8);
  CHECK(c.log.back().loss_total != a.log.back().loss_total);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto data = small_data(2);
  auto config = small_config();
  config.learning_rate = 0.0;
  config.epochs = 15;
  std::vector<std::size_t> dims{6, 6};
  const ModelBundle fresh(config, dims, 3, 4);
  const auto result = train(data, config, 4);
  const auto before = fresh.parameter_values(), after = result.model.parameter_values();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  // lambda_s still ramps, so compare the annealing-free parts of the loss
  for (const auto& row : result.log) {
    CHECK(row.loss_ace_mean == result.log.front().loss_ace_mean);
    CHECK(row.loss_kl_mean == result.log.front().loss_kl_mean);
  }
}

TEST_CASE("single separable view reaches full training accuracy") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SyntheticSpec spec;
    spec.samples = 80;
    spec.views = 1;
    spec.classes = 2;
    spec.dim = 4;
    spec.seed = seed;
    spec.informativeness = {8.0};
    const auto data = gen_synthetic(spec);
    ModelConfig config = small_config();
    config.use_gcn = false;
    config.loss.lambda_t = 0.0;
    config.epochs = 200;
    config.patience = 0;
    const auto result = train(data, config, seed);
    CHECK(result.log.back().train_acc == 1.0);
  }
}

TEST_CASE("view informativeness shows up in test accuracy") {
  auto config = small_config();
  config.epochs = 120;
  SyntheticSpec spec;
  spec.samples = 300;
  spec.views = 1;
  spec.classes = 4;
  spec.dim = 6;
  spec.seed = 3;
  spec.informativeness = {0.0};
  const auto noise = gen_synthetic(spec);
  const auto chance = evaluate(train(noise, config, 1).model, noise, Split::test).fused.accuracy;
  CHECK(std::abs(chance - 0.25) <= 0.1);
  spec.informativeness = {6.0};
  const auto clear = gen_synthetic(spec);
  CHECK(evaluate(train(clear, config, 1).model, clear, Split::test).fused.accuracy > 0.95);
}

TEST_CASE("divergence restores the last good parameters") {
  const auto data = small_data(3);
  auto config = small_config();
  config.learning_rate = 1e200;
  try {
    (void)train(data, config, 1);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    REQUIRE(e.last_good());
    CHECK(e.last_good()->epochs_run() + 1 == e.epoch());
    for (const auto& p : e.last_good()->parameter_values()) CHECK(all_finite(p));
  }
}

TEST_CASE("evaluation reports fused and per-view metrics") {
  const auto data = small_data(4, 3);
  const auto result = train(data, small_config(), 2);
  const auto report = evaluate(result.model, data, Split::test);
  CHECK(report.samples == data.test_index.size());
  CHECK(report.per_view.size() == 3);
  REQUIRE(report.graph);
  CHECK(report.graph->views == 3);
  CHECK(report.fused.mean_uncertainty > 0.0);
  CHECK(report.fused.mean_uncertainty < 1.0);
  const auto on_train = evaluate(result.model, data, Split::train);
  CHECK(on_train.samples == data.train_index.size());
}

TEST_CASE("model files round trip and reject damage") {
  const auto data = small_data(5, 3);
  auto config = small_config();
  config.phi = evidence::FusionKind::linear_weighted;
  config.psi = evidence::FusionKind::cross_attention;
  const auto result = train(data, config, 3);
  const fs::path dir = fs::temp_directory_path() / "tuned_test_model";
  fs::create_directories(dir);
  const auto file = dir / "m.tuned";
  save_model(result.model, file);

  const auto loaded = load_model(file);
  CHECK(loaded.seed() == 3);
  CHECK(loaded.epochs_run() == result.model.epochs_run());
  CHECK(model_config_entries(loaded.config()) == model_config_entries(result.model.config()));
  const auto views = data.split_views(Split::test);
  const auto a = result.model.predict(views), b = loaded.predict(views);
  CHECK(a.fused.evidence == b.fused.evidence);

  const auto bytes = read_bytes(file);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "TUNEDv1\n");

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  write_bytes(dir / "t.tuned", truncated);
  CHECK_THROWS_AS(load_model(dir / "t.tuned"), CorruptFileError);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  write_bytes(dir / "f.tuned", flipped);
  CHECK_THROWS_AS(load_model(dir / "f.tuned"), CorruptFileError);

  auto future = bytes;
  future[6] = '9';
  write_bytes(dir / "v.tuned", future);
  CHECK_THROWS_AS(load_model(dir / "v.tuned"), VersionError);

  write_bytes(dir / "x.tuned", std::vector<char>{'h', 'e', 'l', 'l', 'o'});
  CHECK_THROWS_AS(load_model(dir / "x.tuned"), CorruptFileError);
  fs::remove_all(dir);
}

TEST_CASE("predict checks view shapes") {
  const auto data = small_data(6);
  const auto result = train(data, small_config(), 1);
  std::vector<Tensor2D> wrong{Tensor2D(3, 6), Tensor2D(3, 5)};
  CHECK_THROWS_AS(result.model.predict(wrong), ShapeError);
}
