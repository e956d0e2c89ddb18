#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bcjrnet {

/// Mixes a master seed with a list of tags into an independent sub-stream seed.
/// Used so that every block/trial/job draws from its own generator and results
/// do not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::int64_t poisson(double mean) { return std::poisson_distribution<std::int64_t>(mean)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bcjrnet
