#include "tuned_cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tuned/errors.hpp"
#include "tuned/serialize.hpp"

namespace tuned::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kConflictSeedOffset = 1000;

/// Runs `job(i)` for i in [0, n) on up to worker_count(n) threads and
/// rethrows the first failure by index.
template <typename Job>
void parallel_for(std::size_t n, Job&& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = worker_count(n);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

std::string mean_std(const Summary& s) { return fixed(s.mean) + " ± " + fixed(s.std); }

RunConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides,
                       const std::string& seeds, const std::string& out_dir) {
  RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  for (const auto& o : overrides) apply_override(config, o);
  if (!seeds.empty()) config.seeds = parse_seeds(seeds);
  if (!out_dir.empty()) config.out = out_dir;
  config.model.validate();
  if (config.seeds.empty()) throw ConfigError("no seeds to run");
  return config;
}

std::string config_text(const RunConfig& config) {
  std::string text;
  for (const auto& [k, v] : config_entries(config)) text += k + " = " + v + "\n";
  return text;
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double train_acc = 0.0;
  pipeline::MetricsReport clean;
  std::optional<pipeline::MetricsReport> conflict;
  std::string diverged;
};

SeedRun run_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir, bool write_artifacts) {
  SeedRun run;
  run.seed = seed;
  const auto data = make_dataset(config, seed);
  try {
    auto result = pipeline::train(data, config.model, seed);
    run.epochs = result.model.epochs_run();
    run.train_acc = result.log.empty() ? 0.0 : result.log.back().train_acc;
    run.clean = pipeline::evaluate(result.model, data, pipeline::Split::test);
    if (!config.conflict.empty()) {
      const auto conflicted =
          pipeline::inject_conflict(data, parse_conflict(config.conflict), seed + kConflictSeedOffset);
      run.conflict = pipeline::evaluate(result.model, conflicted, pipeline::Split::test);
    }
    if (write_artifacts) {
      fs::create_directories(dir);
      pipeline::save_model(result.model, dir / "model.tuned");
      std::ofstream epochs(dir / "epochs.csv");
      pipeline::write_epoch_log_csv(epochs, result.log);
      std::ofstream graphs(dir / "graph_snapshots.csv");
      pipeline::write_graph_snapshots_csv(graphs, result.log);
      json metrics{{"seed", seed},
                   {"epochs_run", run.epochs},
                   {"early_stopped", result.early_stopped},
                   {"clean", to_json(run.clean)}};
      if (run.conflict) metrics["conflict"] = to_json(*run.conflict);
      write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    }
  } catch (const pipeline::DivergenceError& e) {
    run.diverged = e.what();
    run.epochs = e.epoch();
    if (write_artifacts && e.last_good()) {
      fs::create_directories(dir);
      pipeline::save_model(*e.last_good(), dir / "model.lastgood.tuned");
    }
  }
  return run;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& seeds,
              const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const RunConfig config = build_config(config_path, overrides, seeds, out_dir);
  const fs::path root(config.out);
  fs::create_directories(root);
  write_text(root / "config.txt", config_text(config));

  std::vector<SeedRun> runs(config.seeds.size());
  parallel_for(runs.size(), [&](std::size_t i) {
    const auto seed = config.seeds[i];
    runs[i] = run_seed(config, seed, root / ("seed_" + std::to_string(seed)), true);
  });

  std::ostringstream csv;
  csv << "seed,status,epochs,train_acc,accuracy,macro_f1,auc,mean_uncertainty";
  if (!config.conflict.empty()) csv << ",conflict_accuracy,conflict_macro_f1,conflict_auc,conflict_mean_uncertainty";
  csv << '\n' << std::setprecision(10);
  std::vector<double> acc, f1, auc, unc, cacc, cunc;
  bool diverged = false;
  out << "seed  epochs  accuracy  macro_f1  auc     u";
  if (!config.conflict.empty()) out << "       conflict_acc  conflict_u";
  out << '\n';
  for (const auto& r : runs) {
    if (!r.diverged.empty()) {
      diverged = true;
      csv << r.seed << ",diverged," << r.epochs << ",,,,,";
      if (!config.conflict.empty()) csv << ",,,,";
      csv << '\n';
      err << "seed " << r.seed << ": " << r.diverged << '\n';
      continue;
    }
    const auto& m = r.clean.fused;
    csv << r.seed << ",ok," << r.epochs << ',' << r.train_acc << ',' << m.accuracy << ',' << m.macro_f1 << ','
        << m.auc << ',' << m.mean_uncertainty;
    out << std::left << std::setw(6) << r.seed << std::setw(8) << r.epochs << std::setw(10) << fixed(m.accuracy)
        << std::setw(10) << fixed(m.macro_f1) << std::setw(8) << fixed(m.auc) << fixed(m.mean_uncertainty);
    acc.push_back(m.accuracy);
    f1.push_back(m.macro_f1);
    auc.push_back(m.auc);
    unc.push_back(m.mean_uncertainty);
    if (r.conflict) {
      const auto& c = r.conflict->fused;
      csv << ',' << c.accuracy << ',' << c.macro_f1 << ',' << c.auc << ',' << c.mean_uncertainty;
      out << "  " << std::setw(14) << fixed(c.accuracy) << fixed(c.mean_uncertainty);
      cacc.push_back(c.accuracy);
      cunc.push_back(c.mean_uncertainty);
    }
    csv << '\n';
    out << '\n';
  }
  write_text(root / "results.csv", csv.str());

  json summary{{"seeds", config.seeds}, {"completed", acc.size()}};
  auto add = [&](const char* name, const std::vector<double>& xs) {
    if (xs.empty()) return;
    const auto s = summarize(xs);
    summary["metrics"][name] = {{"mean", s.mean}, {"std", s.std}};
    out << std::left << std::setw(26) << name << mean_std(s) << '\n';
  };
  out << "mean ± std over " << acc.size() << " seed(s)\n";
  add("accuracy", acc);
  add("macro_f1", f1);
  add("auc", auc);
  add("mean_uncertainty", unc);
  add("conflict_accuracy", cacc);
  add("conflict_mean_uncertainty", cunc);
  write_text(root / "summary.json", summary.dump(2) + "\n");
  return diverged ? kNumeric : kOk;
}

pipeline::MultiViewDataset load_eval_data(const std::string& dir, const std::string& manifest,
                                          std::uint64_t split_seed) {
  pipeline::LoadOptions options;
  options.split_seed = split_seed;
  return pipeline::load_multiview_csv(dir, manifest, options);
}

void check_compatible(const pipeline::ModelBundle& model, const pipeline::MultiViewDataset& data) {
  if (data.num_views() != model.num_views()) {
    throw ShapeError("dataset has " + std::to_string(data.num_views()) + " views but the model expects " +
                     std::to_string(model.num_views()));
  }
  for (std::size_t v = 0; v < data.num_views(); ++v) {
    if (data.views[v].cols() != model.view_dims()[v]) {
      throw ShapeError("view " + std::to_string(v) + " has " + std::to_string(data.views[v].cols()) +
                       " features but the model expects " + std::to_string(model.view_dims()[v]));
    }
  }
  if (data.num_classes != model.num_classes()) {
    throw ShapeError("dataset has " + std::to_string(data.num_classes) + " classes but the model expects " +
                     std::to_string(model.num_classes()));
  }
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, const std::string& manifest,
             const std::string& conflict, std::optional<std::uint64_t> conflict_seed, std::uint64_t split_seed,
             const std::string& out_file, std::ostream& out) {
  const auto model = pipeline::load_model(model_path);
  const auto data = load_eval_data(data_dir, manifest, split_seed);
  check_compatible(model, data);
  json report{{"model", model_path}, {"dataset", data_dir}};
  report["clean"] = to_json(pipeline::evaluate(model, data, pipeline::Split::test));
  if (!conflict.empty()) {
    const auto spec = parse_conflict(conflict);
    const auto seed = conflict_seed.value_or(model.seed() + kConflictSeedOffset);
    const auto conflicted = pipeline::inject_conflict(data, spec, seed);
    report["conflict_spec"] = conflict;
    report["conflict_seed"] = seed;
    report["conflict"] = to_json(pipeline::evaluate(model, conflicted, pipeline::Split::test));
  }
  const std::string text = report.dump(2) + "\n";
  if (!out_file.empty()) write_text(out_file, text);
  out << text;
  return kOk;
}

int cmd_compare_fusion(const std::string& config_path, const std::vector<std::string>& overrides,
                       const std::string& seeds, const std::string& out_dir, std::ostream& out) {
  RunConfig config = build_config(config_path, overrides, seeds, out_dir);
  if (config.conflict.empty()) config.conflict = "noise:views=0:sigma=1.0";
  const fs::path root(config.out);
  fs::create_directories(root);
  write_text(root / "config.txt", config_text(config));

  const std::vector<fusion::Backend> backends{fusion::Backend::smrf, fusion::Backend::average, fusion::Backend::dst};
  const std::size_t nb = backends.size();
  std::vector<SeedRun> runs(config.seeds.size() * nb);
  parallel_for(runs.size(), [&](std::size_t i) {
    RunConfig c = config;
    c.model.backend = backends[i % nb];
    runs[i] = run_seed(c, config.seeds[i / nb], {}, false);
  });

  std::ostringstream per_seed;
  per_seed << "seed,backend,condition,accuracy,macro_f1,auc,mean_uncertainty\n" << std::setprecision(10);
  bool diverged = false;
  std::vector<std::vector<double>> normal(nb), conflicted(nb);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const auto name = fusion::to_string(backends[i % nb]);
    if (!r.diverged.empty()) {
      diverged = true;
      spdlog::error("seed {} backend {}: {}", r.seed, name, r.diverged);
      continue;
    }
    for (const auto* rep : {&r.clean, &*r.conflict}) {
      const auto& m = rep->fused;
      per_seed << r.seed << ',' << name << ',' << (rep == &r.clean ? "normal" : "conflict") << ',' << m.accuracy
               << ',' << m.macro_f1 << ',' << m.auc << ',' << m.mean_uncertainty << '\n';
    }
    normal[i % nb].push_back(r.clean.fused.accuracy);
    conflicted[i % nb].push_back(r.conflict->fused.accuracy);
  }
  write_text(root / "compare_fusion_seeds.csv", per_seed.str());

  std::ostringstream table;
  table << "backend,condition,mean_accuracy,std_accuracy,seeds\n" << std::setprecision(10);
  out << "backend   normal             conflict (" << config.conflict << ")\n";
  for (std::size_t b = 0; b < nb; ++b) {
    const auto name = std::string(fusion::to_string(backends[b]));
    const auto n = normal[b].empty() ? Summary{} : summarize(normal[b]);
    const auto c = conflicted[b].empty() ? Summary{} : summarize(conflicted[b]);
    table << name << ",normal," << n.mean << ',' << n.std << ',' << normal[b].size() << '\n';
    table << name << ",conflict," << c.mean << ',' << c.std << ',' << conflicted[b].size() << '\n';
    out << std::left << std::setw(10) << name << std::setw(19) << mean_std(n) << mean_std(c) << '\n';
  }
  write_text(root / "compare_fusion.csv", table.str());
  return diverged ? kNumeric : kOk;
}

int cmd_export_graph(const std::string& model_path, const std::string& data_dir, const std::string& manifest,
                     const std::string& conflict, std::optional<std::uint64_t> conflict_seed,
                     std::uint64_t split_seed, const std::string& out_dir, std::ostream& out) {
  const auto model = pipeline::load_model(model_path);
  auto data = load_eval_data(data_dir, manifest, split_seed);
  check_compatible(model, data);
  if (!conflict.empty()) {
    data = pipeline::inject_conflict(data, parse_conflict(conflict),
                                     conflict_seed.value_or(model.seed() + kConflictSeedOffset));
  }
  if (model.num_views() < 2) throw ConfigError("export-graph needs at least two views");
  const auto prediction = model.predict(data.split_views(pipeline::Split::test));
  const auto graph = fusion::build_fusion_graph(prediction.conditioned, model.config().fusion.tau);

  const fs::path root(out_dir);
  fs::create_directories(root);
  {
    std::ofstream csv(root / "fusion_graph.csv");
    fusion::write_graph_csv(csv, graph);
  }
  write_text(root / "fusion_graph.json", to_json(graph).dump(2) + "\n");
  for (std::size_t v = 0; v < model.num_views(); ++v) {
    std::ofstream csv(root / ("adjacency_view_" + std::to_string(v) + ".csv"));
    csv.precision(17);
    if (model.config().use_gcn) {
      graph::write_adjacency_csv(csv, model.neighbor_graph(v).adjacency);
    } else {
      csv << "row,col,weight\n";
    }
  }
  out << "wrote " << (root / "fusion_graph.csv").string() << ", fusion_graph.json and " << model.num_views()
      << " adjacency files\n";
  for (auto v : graph.isolated_views) out << "view " << v << " is isolated at tau = " << graph.tau << '\n';
  return kOk;
}

int cmd_gen_synthetic(const pipeline::SyntheticSpec& spec, const std::string& out_dir, std::ostream& out) {
  const auto data = pipeline::gen_synthetic(spec);
  pipeline::save_multiview_csv(data, out_dir);
  out << "wrote " << data.num_views() << " views x " << data.size() << " samples (" << data.train_index.size()
      << " train / " << data.test_index.size() << " test) to " << out_dir << '\n';
  return kOk;
}

/// For train and compare-fusion, rewrites `--key value` config overrides to
/// `--key=value` so they reach the override list instead of the positional
/// config path.
std::vector<std::string> join_override_values(const std::vector<std::string>& args) {
  if (args.empty() || (args[0] != "train" && args[0] != "compare-fusion")) return args;
  static const std::vector<std::string> own{"--seed", "--seeds", "--out", "--help", "-h"};
  std::vector<std::string> result{args[0]};
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    const bool is_override = a.rfind("--", 0) == 0 && a.find('=') == std::string::npos &&
                             std::find(own.begin(), own.end(), a) == own.end();
    if (is_override && i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0) {
      result.push_back(a + "=" + args[i + 1]);
      ++i;
    } else {
      result.push_back(a);
    }
  }
  return result;
}

}  // namespace

unsigned worker_count(std::size_t jobs) {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TUNED_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) cap = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(cap, jobs)));
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw InputError("summarize: no values");
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

json to_json(const pipeline::ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"auc", m.auc}, {"mean_uncertainty", m.mean_uncertainty}};
}

json to_json(const fusion::FusionGraph& g) {
  json weights = json::array(), mask = json::array(), normalized = json::array();
  for (std::size_t i = 0; i < g.views; ++i) {
    json w = json::array(), m = json::array(), n = json::array();
    for (std::size_t j = 0; j < g.views; ++j) {
      w.push_back(g.weights(i, j));
      m.push_back(static_cast<bool>(g.edge_mask[i][j]));
      n.push_back(g.normalized_weights(i, j));
    }
    weights.push_back(std::move(w));
    mask.push_back(std::move(m));
    normalized.push_back(std::move(n));
  }
  return {{"views", g.views},
          {"tau", g.tau},
          {"weights", weights},
          {"edge_mask", mask},
          {"normalized_weights", normalized},
          {"isolated_views", g.isolated_views}};
}

json to_json(const pipeline::MetricsReport& r) {
  json j{{"samples", r.samples}, {"fused", to_json(r.fused)}, {"per_view", json::array()}, {"warnings", r.warnings}};
  for (const auto& v : r.per_view) j["per_view"].push_back(to_json(v));
  if (r.graph) j["fusion_graph"] = to_json(*r.graph);
  return j;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TUNED evidential multi-view classification"};
  app.require_subcommand(1);

  std::string config_path, seeds, out_dir, model_path, data_dir, manifest = "manifest.txt", conflict, out_file;
  std::optional<std::uint64_t> conflict_seed;
  std::uint64_t split_seed = 0;

  auto* train = app.add_subcommand("train", "train one model per seed; extra --key=value pairs override the config");
  train->add_option("config", config_path, "flat key = value config file");
  train->add_option("--seed,--seeds", seeds, "seed list: 1, 1..10 or 1,4,7");
  train->add_option("--out", out_dir, "output directory");
  train->allow_extras();

  auto* compare = app.add_subcommand("compare-fusion", "train once per fusion backend and compare accuracy");
  compare->add_option("config", config_path, "flat key = value config file");
  compare->add_option("--seed,--seeds", seeds, "seed list: 1, 1..10 or 1,4,7");
  compare->add_option("--out", out_dir, "output directory");
  compare->allow_extras();

  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_path, "model file")->required();
    cmd->add_option("--data", data_dir, "dataset directory")->required();
    cmd->add_option("--manifest", manifest, "manifest file name");
    cmd->add_option("--conflict", conflict, "conflict spec, e.g. noise:views=0:sigma=1.0 or swap:views=0,2");
    cmd->add_option("--conflict-seed", conflict_seed, "conflict RNG seed (default: model seed + 1000)");
    cmd->add_option("--split-seed", split_seed, "split seed when the dataset has no split file");
  };
  auto* eval = app.add_subcommand("eval", "evaluate a saved model on clean and conflicted test data");
  add_eval_options(eval);
  eval->add_option("--out", out_file, "also write the JSON report here");

  auto* export_graph = app.add_subcommand("export-graph", "write the view graph and per-view adjacency");
  add_eval_options(export_graph);
  export_graph->add_option("--out", out_dir, "output directory")->required();

  pipeline::SyntheticSpec spec;
  std::string informativeness;
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic multi-view dataset");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--samples", spec.samples, "sample count");
  gen->add_option("--views", spec.views, "view count");
  gen->add_option("--classes", spec.classes, "class count");
  gen->add_option("--dim", spec.dim, "features per view");
  gen->add_option("--informativeness", informativeness, "per-view separation, comma separated");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--test-fraction", spec.test_fraction, "test share");

  std::vector<std::string> argv = join_override_values(args);
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, train->remaining(), seeds, out_dir, out, err);
    if (compare->parsed()) return cmd_compare_fusion(config_path, compare->remaining(), seeds, out_dir, out);
    if (eval->parsed()) {
      return cmd_eval(model_path, data_dir, manifest, conflict, conflict_seed, split_seed, out_file, out);
    }
    if (export_graph->parsed()) {
      return cmd_export_graph(model_path, data_dir, manifest, conflict, conflict_seed, split_seed, out_dir, out);
    }
    if (gen->parsed()) {
      if (!informativeness.empty()) {
        RunConfig tmp;
        set_key(tmp, "informativeness", informativeness);
        spec.informativeness = tmp.synthetic.informativeness;
      }
      return cmd_gen_synthetic(spec, out_dir, out);
    }
  } catch (const pipeline::DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const pipeline::VersionError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const pipeline::CorruptFileError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace tuned::cli
