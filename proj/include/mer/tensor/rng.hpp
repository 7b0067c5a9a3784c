#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mer/tensor/tensor.hpp"

namespace mer {

// All randomness in the library flows through explicitly seeded Rng values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Independent stream derived from this generator's seed and a label.
  Rng fork(std::uint64_t stream) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return Rng((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  bool coin() { return (engine_() >> 63) != 0; }
  std::mt19937_64& engine() { return engine_; }

  template <typename T>
  Tensor<T> uniform_tensor(const Shape& shape, double lo, double hi, bool requires_grad = false) {
    std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
    for (T& x : v) x = static_cast<T>(uniform(lo, hi));
    return Tensor<T>::from(shape, std::move(v), requires_grad);
  }

  template <typename T>
  Tensor<T> normal_tensor(const Shape& shape, double mean, double stddev, bool requires_grad = false) {
    std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
    for (T& x : v) x = static_cast<T>(normal(mean, stddev));
    return Tensor<T>::from(shape, std::move(v), requires_grad);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mer
