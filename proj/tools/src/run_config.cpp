#include "tuned_cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tuned/errors.hpp"

namespace tuned::cli {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + std::string(key) + "': bad number '" + std::string(value) + "'");
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    parts.push_back(trim(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

std::string join_reals(const std::vector<double>& xs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(std::string_view text) {
  const std::string t = trim(text);
  std::vector<std::uint64_t> seeds;
  if (const auto dots = t.find(".."); dots != std::string::npos) {
    const auto lo = parse_number<std::uint64_t>("seeds", trim(t.substr(0, dots)));
    const auto hi = parse_number<std::uint64_t>("seeds", trim(t.substr(dots + 2)));
    if (hi < lo) throw ConfigError("seeds: empty range '" + t + "'");
    if (hi - lo >= 10000) throw ConfigError("seeds: range '" + t + "' is too long");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    for (const auto& part : split(t, ',')) seeds.push_back(parse_number<std::uint64_t>("seeds", part));
  }
  return seeds;
}

pipeline::ConflictSpec parse_conflict(std::string_view text) {
  const auto fields = split(text, ':');
  pipeline::ConflictSpec spec;
  spec.mode = pipeline::conflict_mode_from_string(fields[0]);
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto eq = fields[i].find('=');
    if (eq == std::string::npos) throw ConfigError("conflict spec: expected key=value, got '" + fields[i] + "'");
    const std::string key = fields[i].substr(0, eq);
    const std::string value = fields[i].substr(eq + 1);
    if (key == "views") {
      spec.views.clear();
      for (const auto& v : split(value, ',')) spec.views.push_back(parse_number<std::size_t>("conflict views", v));
    } else if (key == "sigma") {
      spec.sigma = parse_number<double>("conflict sigma", value);
    } else {
      throw ConfigError("conflict spec: unknown field '" + key + "'");
    }
  }
  if (spec.views.empty()) throw ConfigError("conflict spec '" + std::string(text) + "' names no views");
  return spec;
}

void set_key(RunConfig& c, std::string_view key, std::string_view value) {
  if (key == "data") c.data = value;
  else if (key == "manifest") c.manifest = value;
  else if (key == "samples") c.synthetic.samples = parse_number<std::size_t>(key, value);
  else if (key == "views") c.synthetic.views = parse_number<std::size_t>(key, value);
  else if (key == "classes") c.synthetic.classes = parse_number<std::size_t>(key, value);
  else if (key == "dim") c.synthetic.dim = parse_number<std::size_t>(key, value);
  else if (key == "informativeness") {
    c.synthetic.informativeness.clear();
    if (!value.empty()) {
      for (const auto& v : split(value, ',')) c.synthetic.informativeness.push_back(parse_number<double>(key, v));
    }
  } else if (key == "data_seed") {
    if (value == "run") c.data_seed.reset();
    else c.data_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "test_fraction") c.test_fraction = parse_number<double>(key, value);
  else if (key == "conflict") {
    if (value.empty() || value == "none") {
      c.conflict.clear();
    } else {
      parse_conflict(value);
      c.conflict = value;
    }
  } else if (key == "seeds") c.seeds = parse_seeds(value);
  else if (key == "out") c.out = value;
  else if (!pipeline::set_model_key(c.model, key, value)) {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  RunConfig config;
  std::string line;
  for (std::size_t ln = 1; std::getline(in, line); ++ln) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(ln) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    try {
      set_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

void apply_override(RunConfig& config, std::string_view arg) {
  while (!arg.empty() && arg.front() == '-') arg.remove_prefix(1);
  const auto eq = arg.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(arg) + "' is not key=value");
  set_key(config, trim(arg.substr(0, eq)), trim(arg.substr(eq + 1)));
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  std::vector<std::pair<std::string, std::string>> out{
      {"data", c.data},
      {"manifest", c.manifest},
      {"samples", std::to_string(c.synthetic.samples)},
      {"views", std::to_string(c.synthetic.views)},
      {"classes", std::to_string(c.synthetic.classes)},
      {"dim", std::to_string(c.synthetic.dim)},
      {"informativeness", join_reals(c.synthetic.informativeness)},
      {"data_seed", c.data_seed ? std::to_string(*c.data_seed) : "run"},
      {"test_fraction", std::to_string(c.test_fraction)},
      {"conflict", c.conflict.empty() ? "none" : c.conflict},
      {"seeds", seeds},
      {"out", c.out},
  };
  for (auto& kv : pipeline::model_config_entries(c.model)) out.push_back(std::move(kv));
  return out;
}

pipeline::MultiViewDataset make_dataset(const RunConfig& config, std::uint64_t seed) {
  const std::uint64_t data_seed = config.data_seed.value_or(seed);
  if (!config.data.empty()) {
    pipeline::LoadOptions options;
    options.test_fraction = config.test_fraction;
    options.split_seed = data_seed;
    return pipeline::load_multiview_csv(config.data, config.manifest, options);
  }
  pipeline::SyntheticSpec spec = config.synthetic;
  spec.seed = data_seed;
  spec.test_fraction = config.test_fraction;
  return pipeline::gen_synthetic(spec);
}

}  // namespace tuned::cli
