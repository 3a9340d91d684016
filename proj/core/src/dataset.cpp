#include "tuned/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "tuned/errors.hpp"

namespace tuned::pipeline {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool parse_double(std::string_view text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InputError("manifest: expected a boolean, got '" + value + "'");
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train or test)");
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw InputError("dataset has no views");
  const std::size_t n = labels.size();
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != n) {
      throw InputError("view " + std::to_string(v) + " has " + std::to_string(views[v].rows()) +
                       " rows but there are " + std::to_string(n) + " labels");
    }
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  std::vector<int> seen(n, 0);
  for (auto i : train_index) {
    if (i >= n) throw InputError("train index out of range");
    ++seen[i];
  }
  for (auto i : test_index) {
    if (i >= n) throw InputError("test index out of range");
    ++seen[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i] != 1) throw InputError("row " + std::to_string(i) + " is not in exactly one split");
  }
}

std::vector<Tensor2D> MultiViewDataset::split_views(Split split) const {
  std::vector<Tensor2D> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(gather_rows(v, indices(split)));
  return out;
}

std::vector<int> MultiViewDataset::split_labels(Split split) const {
  std::vector<int> out;
  for (auto i : indices(split)) out.push_back(labels[i]);
  return out;
}

void stratified_split(MultiViewDataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  nn::Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.labels.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  data.train_index.clear();
  data.test_index.clear();
  for (auto& rows : by_class) {
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.index(i)]);
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    if (n_test >= rows.size() && !rows.empty()) n_test = rows.size() - 1;
    data.test_index.insert(data.test_index.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    data.train_index.insert(data.train_index.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(data.train_index.begin(), data.train_index.end());
  std::sort(data.test_index.begin(), data.test_index.end());
}

void standardize(MultiViewDataset& data) {
  if (data.train_index.empty()) throw InputError("standardize: empty train split");
  const double n = static_cast<double>(data.train_index.size());
  for (auto& view : data.views) {
    for (std::size_t c = 0; c < view.cols(); ++c) {
      double mean = 0.0;
      for (auto i : data.train_index) mean += view(i, c);
      mean /= n;
      double var = 0.0;
      for (auto i : data.train_index) var += (view(i, c) - mean) * (view(i, c) - mean);
      const double sd = std::sqrt(var / n);
      const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
      for (std::size_t r = 0; r < view.rows(); ++r) view(r, c) = (view(r, c) - mean) * scale;
    }
  }
}

Tensor2D read_numeric_csv(const std::filesystem::path& file, bool header) {
  const auto lines = read_lines(file);
  std::vector<double> data;
  std::size_t cols = 0, rows = 0;
  for (std::size_t ln = header ? 1 : 0; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const auto cells = split_commas(lines[ln]);
    if (rows == 0) cols = cells.size();
    if (cells.size() != cols) {
      throw InputError(file.string() + ":" + std::to_string(ln + 1) + ": expected " + std::to_string(cols) +
                       " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw InputError(file.string() + ":" + std::to_string(ln + 1) + ": column " + std::to_string(c + 1) +
                         ": non-numeric cell '" + trim(cells[c]) + "'");
      }
      data.push_back(v);
    }
    ++rows;
  }
  return Tensor2D(rows, cols, std::move(data));
}

MultiViewDataset load_multiview_csv(const std::filesystem::path& dir, const std::string& manifest,
                                    const LoadOptions& options) {
  const auto manifest_path = dir / manifest;
  std::map<std::string, std::string> entries;
  const auto lines = read_lines(manifest_path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = lines[ln];
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(manifest_path.string() + ":" + std::to_string(ln + 1) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const bool known = key == "views" || key == "labels" || key == "split" || key == "classes" ||
                       key == "header" || key.rfind("view_", 0) == 0;
    if (!known) {
      throw InputError(manifest_path.string() + ":" + std::to_string(ln + 1) + ": unknown key '" + key + "'");
    }
    entries[key] = trim(line.substr(eq + 1));
  }

  const bool header = entries.contains("header") && parse_bool(entries["header"]);
  std::size_t num_views = 0;
  if (entries.contains("views")) {
    num_views = static_cast<std::size_t>(std::stoul(entries["views"]));
  } else {
    while (entries.contains("view_" + std::to_string(num_views))) ++num_views;
  }
  if (num_views == 0) throw InputError(manifest_path.string() + ": no views listed");
  if (!entries.contains("labels")) throw InputError(manifest_path.string() + ": missing 'labels' entry");

  MultiViewDataset data;
  std::vector<std::string> view_files;
  for (std::size_t v = 0; v < num_views; ++v) {
    const std::string key = "view_" + std::to_string(v);
    if (!entries.contains(key)) throw InputError(manifest_path.string() + ": missing '" + key + "' entry");
    view_files.push_back(entries[key]);
    data.views.push_back(read_numeric_csv(dir / entries[key], header));
  }
  for (std::size_t v = 1; v < num_views; ++v) {
    if (data.views[v].rows() != data.views[0].rows()) {
      throw InputError("row-count mismatch: " + view_files[0] + " has " + std::to_string(data.views[0].rows()) +
                       " rows but " + view_files[v] + " has " + std::to_string(data.views[v].rows()));
    }
  }

  const Tensor2D labels = read_numeric_csv(dir / entries["labels"], header);
  if (labels.rows() != data.views[0].rows()) {
    throw InputError("row-count mismatch: " + entries["labels"] + " has " + std::to_string(labels.rows()) +
                     " rows but " + view_files[0] + " has " + std::to_string(data.views[0].rows()));
  }
  int max_label = -1;
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    const double y = labels(i, 0);
    if (y != std::floor(y) || y < 0) {
      throw InputError(entries["labels"] + ":" + std::to_string(i + 1) + ": label " + std::to_string(y) +
                       " is not a nonnegative integer");
    }
    data.labels.push_back(static_cast<int>(y));
    max_label = std::max(max_label, static_cast<int>(y));
  }
  data.num_classes = entries.contains("classes") ? std::stoul(entries["classes"])
                                                 : static_cast<std::size_t>(max_label + 1);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (static_cast<std::size_t>(data.labels[i]) >= data.num_classes) {
      throw InputError(entries["labels"] + ":" + std::to_string(i + 1) + ": label " +
                       std::to_string(data.labels[i]) + " out of range for " + std::to_string(data.num_classes) +
                       " classes");
    }
  }

  if (entries.contains("split")) {
    const auto split_lines = read_lines(dir / entries["split"]);
    std::size_t row = 0;
    for (std::size_t ln = header ? 1 : 0; ln < split_lines.size(); ++ln) {
      const std::string tag = trim(split_lines[ln]);
      if (tag.empty()) continue;
      if (tag == "train" || tag == "0") data.train_index.push_back(row);
      else if (tag == "test" || tag == "1") data.test_index.push_back(row);
      else throw InputError(entries["split"] + ":" + std::to_string(ln + 1) + ": expected train or test, got '" + tag + "'");
      ++row;
    }
    if (row != data.labels.size()) {
      throw InputError("row-count mismatch: " + entries["split"] + " has " + std::to_string(row) + " rows but " +
                       entries["labels"] + " has " + std::to_string(data.labels.size()));
    }
  } else {
    stratified_split(data, options.test_fraction, options.split_seed);
  }
  data.validate();
  if (options.standardize) standardize(data);
  return data;
}

void save_multiview_csv(const MultiViewDataset& data, const std::filesystem::path& dir) {
  data.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  manifest << "views = " << data.num_views() << "\n";
  for (std::size_t v = 0; v < data.num_views(); ++v) {
    const std::string name = "view_" + std::to_string(v) + ".csv";
    manifest << "view_" << v << " = " << name << "\n";
    std::ofstream out(dir / name);
    out.precision(17);
    const auto& x = data.views[v];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << x(i, j);
      out << '\n';
    }
  }
  manifest << "labels = labels.csv\nsplit = split.csv\nclasses = " << data.num_classes << "\n";
  std::ofstream labels(dir / "labels.csv");
  for (int y : data.labels) labels << y << '\n';
  std::vector<char> is_test(data.size(), 0);
  for (auto i : data.test_index) is_test[i] = 1;
  std::ofstream split(dir / "split.csv");
  for (char t : is_test) split << (t ? "test" : "train") << '\n';
}

MultiViewDataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.views == 0) throw ConfigError("gen_synthetic: need at least one view");
  if (spec.classes < 2) throw ConfigError("gen_synthetic: need at least two classes");
  if (spec.samples < 4 * spec.classes) {
    throw ConfigError("gen_synthetic: n = " + std::to_string(spec.samples) + " is below 4K = " +
                      std::to_string(4 * spec.classes));
  }
  if (spec.dim == 0) throw ConfigError("gen_synthetic: dim must be positive");
  std::vector<double> sep = spec.informativeness;
  if (sep.empty()) sep.assign(spec.views, 3.0);
  if (sep.size() != spec.views) {
    throw ConfigError("gen_synthetic: " + std::to_string(sep.size()) + " informativeness values for " +
                      std::to_string(spec.views) + " views");
  }

  nn::Rng rng(spec.seed);
  MultiViewDataset data;
  data.num_classes = spec.classes;
  data.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) data.labels[i] = static_cast<int>(i % spec.classes);
  for (std::size_t i = spec.samples; i > 1; --i) std::swap(data.labels[i - 1], data.labels[rng.index(i)]);

  for (std::size_t v = 0; v < spec.views; ++v) {
    Tensor2D centres(spec.classes, spec.dim);
    for (std::size_t c = 0; c < spec.classes; ++c) {
      double norm = 0.0;
      for (auto& x : centres.row(c)) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : centres.row(c)) x /= norm;
    }
    Tensor2D x(spec.samples, spec.dim);
    for (std::size_t i = 0; i < spec.samples; ++i) {
      const auto mu = centres.row(static_cast<std::size_t>(data.labels[i]));
      for (std::size_t j = 0; j < spec.dim; ++j) x(i, j) = sep[v] * mu[j] + rng.normal();
    }
    data.views.push_back(std::move(x));
  }
  stratified_split(data, spec.test_fraction, rng.split().seed());
  standardize(data);
  return data;
}

std::string_view to_string(ConflictMode mode) { return mode == ConflictMode::noise ? "noise" : "swap"; }

ConflictMode conflict_mode_from_string(std::string_view name) {
  if (name == "noise") return ConflictMode::noise;
  if (name == "swap") return ConflictMode::swap;
  throw ConfigError("unknown conflict mode '" + std::string(name) + "' (expected noise or swap)");
}

std::vector<std::size_t> draw_swap_sources(const MultiViewDataset& data, nn::Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> sources;
  sources.reserve(data.test_index.size());
  for (auto row : data.test_index) {
    const std::size_t own = static_cast<std::size_t>(data.labels[row]);
    const std::size_t others = data.size() - by_class[own].size();
    if (others == 0) throw InputError("swap conflict needs at least two classes present");
    std::size_t pick = rng.index(others);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (c == own) continue;
      if (pick < by_class[c].size()) {
        sources.push_back(by_class[c][pick]);
        break;
      }
      pick -= by_class[c].size();
    }
  }
  return sources;
}

MultiViewDataset inject_conflict(const MultiViewDataset& data, const ConflictSpec& spec, std::uint64_t seed) {
  for (auto v : spec.views) {
    if (v >= data.num_views()) {
      throw InputError("conflict target view " + std::to_string(v) + " out of range for " +
                       std::to_string(data.num_views()) + " views");
    }
  }
  if (!(spec.sigma >= 0.0)) throw ConfigError("conflict sigma must be >= 0");
  MultiViewDataset out = data;
  if (spec.views.empty()) return out;
  std::vector<std::size_t> targets = spec.views;
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

  nn::Rng rng(seed);
  if (spec.mode == ConflictMode::noise) {
    if (spec.sigma == 0.0) return out;
    for (auto v : targets) {
      auto& x = out.views[v];
      for (auto row : data.test_index)
        for (auto& value : x.row(row)) value += rng.normal(0.0, spec.sigma);
    }
    return out;
  }
  const auto sources = draw_swap_sources(data, rng);
  for (auto v : targets) {
    for (std::size_t t = 0; t < data.test_index.size(); ++t) {
      const auto src = data.views[v].row(sources[t]);
      std::copy(src.begin(), src.end(), out.views[v].row(data.test_index[t]).begin());
    }
  }
  return out;
}

}  // namespace tuned::pipeline
