#include "tuned/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace tuned::pipeline {
namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

constexpr char kMagic[8] = {'T', 'U', 'N', 'E', 'D', 'v', '1', '\n'};
constexpr std::size_t kVersionOffset = 6;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u64(std::uint64_t x) { raw(&x, sizeof x); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void tensor(const Tensor2D& t) {
    u64(t.rows());
    u64(t.cols());
    raw(t.data(), t.size() * sizeof(double));
  }
  const std::string& bytes() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  std::uint64_t u64() {
    std::uint64_t x = 0;
    raw(&x, sizeof x);
    return x;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor2D tensor() {
    const auto r = u64();
    const auto c = u64();
    if (c != 0 && r > (buf_.size() - pos_) / sizeof(double) / c) throw CorruptFileError("model file: tensor larger than file");
    std::vector<double> data(r * c);
    raw(data.data(), data.size() * sizeof(double));
    return Tensor2D(r, c, std::move(data));
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > buf_.size() - pos_) throw CorruptFileError("model file: payload ends early");
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const ModelBundle& model, const std::filesystem::path& path) {
  if (!model.has_training_data()) throw StateError("cannot save a model without training data");
  Writer w;
  w.u64(model.seed());
  w.u64(model.epochs_run());
  w.u64(model.num_classes());
  w.u64(model.num_views());
  for (auto d : model.view_dims()) w.u64(d);
  const auto entries = model_config_entries(model.config());
  w.u64(entries.size());
  for (const auto& [k, v] : entries) {
    w.str(k);
    w.str(v);
  }
  const auto params = model.parameter_values();
  w.u64(params.size());
  for (const auto& p : params) w.tensor(p);
  for (const auto& x : model.train_views()) w.tensor(x);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write model file " + path.string());
  const std::string& payload = w.bytes();
  const std::uint64_t length = payload.size();
  const std::uint64_t checksum = fnv1a(payload);
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
  if (!out) throw InputError("failed writing model file " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file " + path.string());
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "model file " + path.string();
  if (file.size() < sizeof kMagic || std::memcmp(file.data(), kMagic, kVersionOffset) != 0) {
    throw CorruptFileError(where + ": missing TUNED header");
  }
  if (std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
    throw VersionError(where + ": unsupported format version '" +
                       file.substr(kVersionOffset, sizeof kMagic - kVersionOffset - 1) + "' (expected 1)");
  }
  if (file.size() < sizeof kMagic + 16) throw CorruptFileError(where + ": truncated");
  std::uint64_t length = 0;
  std::memcpy(&length, file.data() + sizeof kMagic, sizeof length);
  if (length != file.size() - sizeof kMagic - 16) throw CorruptFileError(where + ": truncated or padded");
  const std::string payload = file.substr(sizeof kMagic + 8, length);
  std::uint64_t checksum = 0;
  std::memcpy(&checksum, file.data() + file.size() - 8, sizeof checksum);
  if (checksum != fnv1a(payload)) throw CorruptFileError(where + ": checksum mismatch");

  Reader r(payload);
  const auto seed = r.u64();
  const auto epochs_run = r.u64();
  const auto num_classes = r.u64();
  const auto num_views = r.u64();
  if (num_views > 4096) throw CorruptFileError(where + ": implausible view count");
  std::vector<std::size_t> dims;
  for (std::uint64_t v = 0; v < num_views; ++v) dims.push_back(r.u64());
  ModelConfig config;
  const auto n_entries = r.u64();
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    const std::string key = r.str();
    const std::string value = r.str();
    if (!set_model_key(config, key, value)) throw CorruptFileError(where + ": unknown config key '" + key + "'");
  }
  ModelBundle model(config, dims, num_classes, seed);
  const auto n_params = r.u64();
  if (n_params > payload.size()) throw CorruptFileError(where + ": implausible parameter count");
  std::vector<Tensor2D> params;
  for (std::uint64_t i = 0; i < n_params; ++i) params.push_back(r.tensor());
  try {
    model.set_parameter_values(params);
  } catch (const ShapeError& e) {
    throw CorruptFileError(where + ": " + e.what());
  }
  std::vector<Tensor2D> train_views;
  for (std::uint64_t v = 0; v < num_views; ++v) train_views.push_back(r.tensor());
  if (!r.done()) throw CorruptFileError(where + ": trailing bytes in payload");
  model.attach_training_data(std::move(train_views));
  model.set_epochs_run(epochs_run);
  return model;
}

}  // namespace tuned::pipeline
