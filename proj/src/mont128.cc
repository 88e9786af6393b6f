// SPDX-License-Identifier: Apache-2.0
#include "rflpa/mont128.h"

namespace rflpa {

Mont128::Mont128(u128 modulus) : m_(modulus) {
  if ((m_ & 1) == 0 || m_ < 3 || (m_ >> 127) != 0) throw ConfigError("Montgomery modulus must be odd and below 2^127");
  m0_ = static_cast<std::uint64_t>(m_);
  m1_ = static_cast<std::uint64_t>(m_ >> 64);
  std::uint64_t inv = m0_;  // Newton iteration for m0^{-1} mod 2^64
  for (int i = 0; i < 6; ++i) inv *= 2 - m0_ * inv;
  minv_ = 0 - inv;
  r1_ = (0 - m_) % m_;
  r2_ = r1_;
  for (int i = 0; i < 128; ++i) r2_ = add(r2_, r2_);
}

u128 Mont128::pow(u128 a, u128 e) const {
  u128 r = r1_;
  while (e) {
    if (e & 1) r = mul(r, a);
    a = mul(a, a);
    e >>= 1;
  }
  return r;
}

u128 Mont128::inv(u128 a) const {
  u128 x = from_mont(a);
  if (x == 0) throw DomainError("inversion of zero modulo m");
  // Extended Euclid; |coefficients| stay below m < 2^127.
  __int128 t = 0, new_t = 1;
  u128 r = m_, new_r = x;
  while (new_r != 0) {
    const u128 q = r / new_r;
    const __int128 tmp_t = t - static_cast<__int128>(q) * new_t;
    t = new_t;
    new_t = tmp_t;
    const u128 tmp_r = r - q * new_r;
    r = new_r;
    new_r = tmp_r;
  }
  if (r != 1) throw DomainError("value not invertible modulo m");
  if (t < 0) t += static_cast<__int128>(m_);
  return to_mont(static_cast<u128>(t));
}

u128 mulmod128(u128 a, u128 b, u128 m) {
  Mont128 mont(m);
  return mont.from_mont(mont.mul(mont.to_mont(a), mont.to_mont(b)));
}

}  // namespace rflpa
