#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace tuned::nn {

/// Seeded pseudo-random source. Two instances built from the same seed yield
/// bit-identical draw sequences within one build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Gamma(shape, 1) draw; shape > 0.
  double gamma(double shape);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Independent child stream, deterministic in (seed, number of prior splits).
  Rng split();

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace tuned::nn
