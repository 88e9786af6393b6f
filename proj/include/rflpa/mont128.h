// SPDX-License-Identifier: Apache-2.0
//
// Montgomery arithmetic modulo an odd m < 2^127, two 64-bit limbs. Values
// passed to mul/add/sub are in Montgomery form; to_mont/from_mont convert.
#pragma once

#include <cstdint>

#include "rflpa/errors.h"

namespace rflpa {

using u128 = unsigned __int128;

class Mont128 {
 public:
  explicit Mont128(u128 modulus);

  u128 modulus() const { return m_; }

  u128 to_mont(u128 x) const { return mul(x % m_, r2_); }
  u128 from_mont(u128 x) const { return mul(x, 1); }
  u128 one() const { return r1_; }

  u128 add(u128 a, u128 b) const {
    u128 s = a + b;  // < 2^128 since m < 2^127
    return s >= m_ ? s - m_ : s;
  }
  u128 sub(u128 a, u128 b) const { return a >= b ? a - b : a + m_ - b; }
  u128 neg(u128 a) const { return a == 0 ? 0 : m_ - a; }

  u128 mul(u128 a, u128 b) const {
    const std::uint64_t a0 = static_cast<std::uint64_t>(a), a1 = static_cast<std::uint64_t>(a >> 64);
    const std::uint64_t b0 = static_cast<std::uint64_t>(b), b1 = static_cast<std::uint64_t>(b >> 64);
    std::uint64_t t0 = 0, t1 = 0, t2 = 0;
    for (int i = 0; i < 2; ++i) {
      const std::uint64_t bi = i == 0 ? b0 : b1;
      u128 c = static_cast<u128>(a0) * bi + t0;
      t0 = static_cast<std::uint64_t>(c);
      c = static_cast<u128>(a1) * bi + t1 + (c >> 64);
      t1 = static_cast<std::uint64_t>(c);
      t2 += static_cast<std::uint64_t>(c >> 64);
      const std::uint64_t q = t0 * minv_;
      c = static_cast<u128>(q) * m0_ + t0;
      c = static_cast<u128>(q) * m1_ + t1 + (c >> 64);
      t0 = static_cast<std::uint64_t>(c);
      c = static_cast<u128>(t2) + (c >> 64);
      t1 = static_cast<std::uint64_t>(c);
      t2 = static_cast<std::uint64_t>(c >> 64);
    }
    u128 r = (static_cast<u128>(t1) << 64) | t0;
    return r >= m_ ? r - m_ : r;
  }

  u128 sqr(u128 a) const { return mul(a, a); }
  u128 pow(u128 a, u128 e) const;
  // Inverse of a Montgomery-form value; throws DomainError on zero.
  u128 inv(u128 a) const;

 private:
  u128 m_;
  std::uint64_t m0_, m1_;
  std::uint64_t minv_;  // -m^{-1} mod 2^64
  u128 r1_;             // 2^128 mod m
  u128 r2_;             // 2^256 mod m
};

// Plain (a * b) mod m for m < 2^127 via Montgomery round trip.
u128 mulmod128(u128 a, u128 b, u128 m);

}  // namespace rflpa
