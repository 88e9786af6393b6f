// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

namespace rflpa {

// Seedable deterministic generator shared by every randomized component so
// that simulations replay bit-for-bit under a fixed seed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return eng_(); }

  // Uniform in [0, bound) by rejection sampling.
  std::uint64_t uniform(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t excess = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      std::uint64_t x = eng_();
      if (excess == 0 || x < 0 - excess) return x % bound;
    }
  }

  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(eng_);
  }

  template <std::size_t N>
  std::array<unsigned char, N> bytes() {
    std::array<unsigned char, N> out{};
    for (std::size_t i = 0; i < N; i += 8) {
      std::uint64_t x = eng_();
      for (std::size_t j = 0; j < 8 && i + j < N; ++j) out[i + j] = static_cast<unsigned char>(x >> (8 * j));
    }
    return out;
  }

  // Independent child stream; the label keeps derived streams stable when
  // call order elsewhere changes.
  Rng fork(std::uint64_t label) {
    std::uint64_t s = eng_() ^ mix(label);
    return Rng(s);
  }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    return mix(mix(mix(seed ^ mix(a)) ^ mix(b + 1)) ^ mix(c + 2));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace rflpa
