// SPDX-License-Identifier: Apache-2.0
//
// Prime-field arithmetic over F_P (P < 2^62) and the signed fixed-point
// encoding used to carry quantized reals through the sharing layer.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rflpa/errors.h"
#include "rflpa/rng.h"

namespace rflpa {

inline constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;
inline constexpr std::uint64_t kDefaultScale = std::uint64_t{1} << 16;

using u128 = unsigned __int128;

// An element of F_P. The modulus lives in PrimeField; an Fe is only
// meaningful together with the field that produced it.
struct Fe {
  std::uint64_t v = 0;
  friend constexpr bool operator==(Fe, Fe) = default;
  friend constexpr auto operator<=>(Fe, Fe) = default;
};

using FeVec = std::vector<Fe>;

bool is_prime_u64(std::uint64_t n);

class PrimeField {
 public:
  explicit PrimeField(std::uint64_t prime = kMersenne61);

  std::uint64_t modulus() const { return p_; }
  bool is_mersenne61() const { return mersenne_; }

  Fe zero() const { return Fe{0}; }
  Fe one() const { return Fe{1}; }
  Fe from_u64(std::uint64_t x) const { return Fe{x % p_}; }

  Fe add(Fe a, Fe b) const {
    std::uint64_t s = a.v + b.v;
    return Fe{s >= p_ ? s - p_ : s};
  }
  Fe sub(Fe a, Fe b) const { return Fe{a.v >= b.v ? a.v - b.v : a.v + p_ - b.v}; }
  Fe neg(Fe a) const { return Fe{a.v == 0 ? 0 : p_ - a.v}; }
  Fe mul(Fe a, Fe b) const { return Fe{reduce(static_cast<u128>(a.v) * b.v)}; }
  Fe pow(Fe a, std::uint64_t e) const;
  // Throws DomainError on zero.
  Fe inv(Fe a) const;
  Fe div(Fe a, Fe b) const { return mul(a, inv(b)); }

  // Reduces any 128-bit value. Sums of up to 16 raw products stay exact.
  std::uint64_t reduce(u128 x) const {
    if (mersenne_) {
      std::uint64_t lo = static_cast<std::uint64_t>(x) & kMersenne61;
      u128 hi = x >> 61;
      std::uint64_t lo2 = static_cast<std::uint64_t>(hi) & kMersenne61;
      std::uint64_t hi2 = static_cast<std::uint64_t>(hi >> 61);
      std::uint64_t r = lo + lo2 + hi2;  // < 3 * 2^61
      r = (r & kMersenne61) + (r >> 61);
      return r >= kMersenne61 ? r - kMersenne61 : r;
    }
    return static_cast<std::uint64_t>(x % p_);
  }

  // Upper-half convention: v >= 0 -> v, v < 0 -> P - |v|. Requires |v| < P/2.
  Fe encode(std::int64_t v) const;
  // Inverse of encode on (-P/2, P/2).
  std::int64_t decode(Fe a) const;

  Fe random(Rng& rng) const;
  // Nonzero uniform element.
  Fe random_nonzero(Rng& rng) const;

  // Batch inversion (Montgomery's trick); throws on any zero.
  FeVec batch_inv(std::span<const Fe> xs) const;

  friend bool operator==(const PrimeField& a, const PrimeField& b) { return a.p_ == b.p_; }

 private:
  std::uint64_t p_;
  bool mersenne_;
};

// Accumulates sum(a_i * b_i) lazily in 128 bits and reduces every 16 terms.
class DotAccumulator {
 public:
  explicit DotAccumulator(const PrimeField& f) : f_(f) {}
  void add(Fe a, Fe b) {
    acc_ += static_cast<u128>(a.v) * b.v;
    if (++n_ == 16) flush();
  }
  Fe value() {
    flush();
    return Fe{red_};
  }

 private:
  void flush() {
    red_ = f_.reduce(acc_ + red_);
    acc_ = 0;
    n_ = 0;
  }
  const PrimeField& f_;
  u128 acc_ = 0;
  std::uint64_t red_ = 0;
  int n_ = 0;
};

// Scale q and the bound on the server-gradient norm that drive the overflow
// audit. max_norm is expressed in real units; the audit converts to quantized
// integer units (q * max_norm).
struct FieldParams {
  std::uint64_t prime = kMersenne61;
  std::uint64_t scale = kDefaultScale;
  double max_norm = 2.0;
};

// Quantized-integer norm bound q * max_norm, rounded up.
std::uint64_t quantized_norm_bound(const FieldParams& params);

// Checks P > max{N * |g0|_q, |g0|_q^2} and that trust-weighted sums
// (N * |g0|_q^3) stay below P/2. Throws ConfigError naming the violated bound.
void audit_overflow(const FieldParams& params, std::size_t num_clients);

// Rounding toward zero: floor(q x) for x >= 0, floor(q x) + 1 for x < 0.
// Throws OverflowError when |q x| >= P/2.
std::int64_t quantize(double x, std::uint64_t scale, std::uint64_t prime = kMersenne61);

std::vector<std::int64_t> quantize_vector(std::span<const double> xs, std::uint64_t scale,
                                          std::uint64_t prime = kMersenne61);

FeVec encode_vector(const PrimeField& f, std::span<const std::int64_t> xs);
std::vector<std::int64_t> decode_vector(const PrimeField& f, std::span<const Fe> xs);

}  // namespace rflpa
