#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tuned/errors.hpp"
#include "tuned_cli/commands.hpp"
#include "tuned_cli/run_config.hpp"

using namespace tuned;
using namespace tuned::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run tuned_cmd(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path root;
  Workspace() : root(fs::temp_directory_path() / "tuned_cli_test") {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

const std::vector<std::string> kSmall{"--samples=120", "--views=3", "--classes=3", "--dim=6",
                                      "--hidden=8",    "--k=5",     "--epochs=20", "--anneal_steps=5"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

std::size_t line_count(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("seed and conflict specs parse") {
  CHECK(parse_seeds("3") == std::vector<std::uint64_t>{3});
  CHECK(parse_seeds("1..4") == std::vector<std::uint64_t>{1, 2, 3, 4});
  CHECK(parse_seeds("1,4,7") == std::vector<std::uint64_t>{1, 4, 7});
  CHECK_THROWS_AS(parse_seeds("4..1"), ConfigError);
  CHECK_THROWS_AS(parse_seeds("x"), ConfigError);

  const auto noise = parse_conflict("noise:views=0:sigma=1.5");
  CHECK(noise.mode == pipeline::ConflictMode::noise);
  CHECK(noise.views == std::vector<std::size_t>{0});
  CHECK(noise.sigma == 1.5);
  const auto swap = parse_conflict("swap:views=0,2");
  CHECK(swap.mode == pipeline::ConflictMode::swap);
  CHECK(swap.views == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(parse_conflict("blur:views=0"), ConfigError);
}

TEST_CASE("summary uses the sample standard deviation") {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(std::abs(s.std - std::sqrt(5.0 / 3.0)) < 1e-15);
  CHECK(summarize({0.7}).std == 0.0);
}

TEST_CASE("thread cap follows the environment") {
  setenv("TUNED_THREADS", "3", 1);
  CHECK(worker_count(10) == 3);
  CHECK(worker_count(2) == 2);
  setenv("TUNED_THREADS", "1", 1);
  CHECK(worker_count(10) == 1);
  setenv("TUNED_THREADS", "2", 1);
}

TEST_CASE("config files and overrides") {
  Workspace ws;
  std::ofstream(ws / "a.cfg") << "# comment\nviews = 4\n\nlr = 0.5   # trailing\nseeds = 2..3\n";
  auto config = load_run_config(ws / "a.cfg");
  CHECK(config.synthetic.views == 4);
  CHECK(config.model.learning_rate == 0.5);
  CHECK(config.seeds == std::vector<std::uint64_t>{2, 3});
  apply_override(config, "--lr=0.25");
  CHECK(config.model.learning_rate == 0.25);
  CHECK_THROWS_AS(apply_override(config, "--lr"), ConfigError);
}

TEST_CASE("unknown keys exit 2 naming the key and line") {
  Workspace ws;
  std::ofstream(ws / "bad.cfg") << "lr = 0.1\n\nwobble = 3\n";
  const auto r = tuned_cmd({"train", ws / "bad.cfg"});
  CHECK(r.code == 2);
  CHECK(r.err.find("wobble") != std::string::npos);
  CHECK(r.err.find("bad.cfg:3") != std::string::npos);

  const auto o = tuned_cmd({"train", "--wobble=3"});
  CHECK(o.code == 2);
  CHECK(o.err.find("wobble") != std::string::npos);
  CHECK(tuned_cmd({"frobnicate"}).code == 2);
  CHECK(tuned_cmd({"train", "--lr=-1"}).code == 2);
}

TEST_CASE("train over a seed range writes rows and a summary") {
  Workspace ws;
  const auto r = tuned_cmd(with_small({"train", "--seed", "1..3", "--out", ws / "run", "--conflict",
                                       "noise:views=0:sigma=1.0"}));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("mean ± std over 3 seed(s)") != std::string::npos);
  CHECK(line_count(ws / "run/results.csv") == 4);
  for (int s = 1; s <= 3; ++s) {
    const auto dir = ws.root / "run" / ("seed_" + std::to_string(s));
    CHECK(fs::exists(dir / "model.tuned"));
    CHECK(fs::exists(dir / "metrics.json"));
    std::ifstream log(dir / "epochs.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,loss_total,loss_ace_mean,loss_kl_mean,loss_con,lambda_s,train_acc");
  }
  CHECK(fs::exists(ws.root / "run/summary.json"));
}

TEST_CASE("divergence exits 3 and keeps the last good model") {
  Workspace ws;
  const auto r = tuned_cmd(with_small({"train", "--out", ws / "div", "--lr", "1e200"}));
  CHECK(r.code == 3);
  CHECK(r.err.find("diverged") != std::string::npos);
  CHECK(fs::exists(ws.root / "div/seed_1/model.lastgood.tuned"));
}

TEST_CASE("eval, export-graph and shape checks") {
  Workspace ws;
  REQUIRE(tuned_cmd(with_small({"train", "--out", ws / "run"})).code == 0);
  REQUIRE(tuned_cmd({"gen-synthetic", "--out", ws / "data", "--samples", "120", "--views", "3", "--classes", "3",
                     "--dim", "6", "--seed", "1"})
              .code == 0);
  const std::string model = ws / "run/seed_1/model.tuned";

  const auto e = tuned_cmd({"eval", "--model", model, "--data", ws / "data", "--conflict", "swap:views=0,2"});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("\"clean\"") != std::string::npos);
  CHECK(e.out.find("\"conflict\"") != std::string::npos);

  const auto g = tuned_cmd({"export-graph", "--model", model, "--data", ws / "data", "--out", ws / "graph"});
  REQUIRE(g.code == 0);
  CHECK(line_count(ws / "graph/fusion_graph.csv") == 10);
  CHECK(fs::exists(ws.root / "graph/fusion_graph.json"));
  for (int v = 0; v < 3; ++v) CHECK(fs::exists(ws.root / ("graph/adjacency_view_" + std::to_string(v) + ".csv")));

  REQUIRE(tuned_cmd({"gen-synthetic", "--out", ws / "wide", "--samples", "120", "--views", "3", "--classes", "3",
                     "--dim", "7"})
              .code == 0);
  const auto bad = tuned_cmd({"eval", "--model", model, "--data", ws / "wide"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("expects 6") != std::string::npos);

  std::ofstream(ws / "junk.tuned") << "not a model";
  CHECK(tuned_cmd({"eval", "--model", ws / "junk.tuned", "--data", ws / "data"}).code == 2);
}

TEST_CASE("compare-fusion fills a backend by condition table") {
  Workspace ws;
  const auto r = tuned_cmd(with_small({"compare-fusion", "--seed", "1..2", "--out", ws / "cmp"}));
  REQUIRE(r.code == 0);
  CHECK(line_count(ws / "cmp/compare_fusion.csv") == 7);
  CHECK(line_count(ws / "cmp/compare_fusion_seeds.csv") == 13);
  for (const char* name : {"smrf", "average", "dst"}) CHECK(r.out.find(name) != std::string::npos);
}
