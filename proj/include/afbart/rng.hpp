#pragma once

#include <cstdint>
#include <random>

namespace afbart {

// Single seeded generator shared by a sampler chain. All stochastic draws
// consume it in the fixed order documented in sampler.cpp, so equal seeds
// give bit-identical chains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unif_(gen_); }

  double normal() { return norm_(gen_); }

  // shape-scale convention
  double gamma(double shape, double scale) {
    std::gamma_distribution<double> d(shape, scale);
    return d(gen_);
  }

  // inclusive range [0, n-1]
  std::size_t uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace afbart
