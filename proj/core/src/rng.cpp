#include "tuned/rng.hpp"

#include "tuned/errors.hpp"

namespace tuned::nn {

double Rng::uniform(double lo, double hi) {
  ++draws_;
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
  ++draws_;
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("Rng::gamma: shape must be positive");
  ++draws_;
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw DomainError("Rng::index: empty range");
  ++draws_;
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Rng Rng::split() {
  ++draws_;
  // splitmix64 finalizer over the next engine output
  std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

}  // namespace tuned::nn
