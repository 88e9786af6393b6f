// SPDX-License-Identifier: Apache-2.0
#include "rflpa/field.h"

#include <cmath>
#include <string>

namespace rflpa {

namespace {

std::uint64_t mulmod_u64(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

std::uint64_t powmod_u64(std::uint64_t a, std::uint64_t e, std::uint64_t m) {
  std::uint64_t r = 1 % m;
  a %= m;
  while (e) {
    if (e & 1) r = mulmod_u64(r, a, m);
    a = mulmod_u64(a, a, m);
    e >>= 1;
  }
  return r;
}

}  // namespace

// Deterministic Miller-Rabin; this witness set is exact for 64-bit inputs.
bool is_prime_u64(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    std::uint64_t x = powmod_u64(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod_u64(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

PrimeField::PrimeField(std::uint64_t prime) : p_(prime), mersenne_(prime == kMersenne61) {
  if (prime >= (std::uint64_t{1} << 62)) throw ConfigError("field prime must be below 2^62");
  if (!is_prime_u64(prime)) throw ConfigError("field modulus " + std::to_string(prime) + " is not prime");
}

Fe PrimeField::pow(Fe a, std::uint64_t e) const {
  Fe r = one();
  while (e) {
    if (e & 1) r = mul(r, a);
    a = mul(a, a);
    e >>= 1;
  }
  return r;
}

Fe PrimeField::inv(Fe a) const {
  if (a.v == 0) throw DomainError("inversion of zero in F_P");
  // Extended Euclid on signed 128-bit values.
  __int128 t = 0, new_t = 1;
  __int128 r = p_, new_r = a.v;
  while (new_r != 0) {
    __int128 q = r / new_r;
    __int128 tmp = t - q * new_t;
    t = new_t;
    new_t = tmp;
    tmp = r - q * new_r;
    r = new_r;
    new_r = tmp;
  }
  if (t < 0) t += p_;
  return Fe{static_cast<std::uint64_t>(t)};
}

Fe PrimeField::encode(std::int64_t v) const {
  const std::uint64_t half = p_ / 2;  // P odd: valid range is [-half, half]
  const std::uint64_t mag = v < 0 ? static_cast<std::uint64_t>(-(v + 1)) + 1 : static_cast<std::uint64_t>(v);
  if (mag > half) throw OverflowError("value " + std::to_string(v) + " outside signed range of F_P");
  return v < 0 ? Fe{p_ - mag} : Fe{mag};
}

std::int64_t PrimeField::decode(Fe a) const {
  if (a.v <= p_ / 2) return static_cast<std::int64_t>(a.v);
  return -static_cast<std::int64_t>(p_ - a.v);
}

Fe PrimeField::random(Rng& rng) const { return Fe{rng.uniform(p_)}; }

Fe PrimeField::random_nonzero(Rng& rng) const { return Fe{1 + rng.uniform(p_ - 1)}; }

FeVec PrimeField::batch_inv(std::span<const Fe> xs) const {
  FeVec prefix(xs.size());
  Fe acc = one();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].v == 0) throw DomainError("inversion of zero in F_P");
    prefix[i] = acc;
    acc = mul(acc, xs[i]);
  }
  Fe inv_acc = inv(acc);
  FeVec out(xs.size());
  for (std::size_t i = xs.size(); i-- > 0;) {
    out[i] = mul(inv_acc, prefix[i]);
    inv_acc = mul(inv_acc, xs[i]);
  }
  return out;
}

std::uint64_t quantized_norm_bound(const FieldParams& params) {
  return static_cast<std::uint64_t>(std::ceil(static_cast<long double>(params.scale) * params.max_norm));
}

void audit_overflow(const FieldParams& params, std::size_t num_clients) {
  if (params.scale < 1) throw ConfigError("scale q must be >= 1");
  if (!(params.max_norm > 0)) throw ConfigError("max_norm must be positive");
  if (!is_prime_u64(params.prime)) throw ConfigError("prime P is not prime");
  const long double p = static_cast<long double>(params.prime);
  const long double g = static_cast<long double>(quantized_norm_bound(params));
  const long double n = static_cast<long double>(num_clients);
  if (!(p > n * g)) throw ConfigError("overflow audit: P <= N * |g0|_q");
  if (!(p > g * g)) throw ConfigError("overflow audit: P <= |g0|_q^2");
  if (!(p / 2 > n * g * g * g)) throw ConfigError("overflow audit: trust-weighted aggregate N * |g0|_q^3 >= P/2");
}

std::int64_t quantize(double x, std::uint64_t scale, std::uint64_t prime) {
  const long double qx = static_cast<long double>(x) * static_cast<long double>(scale);
  if (!std::isfinite(static_cast<double>(qx)) || std::fabs(qx) >= static_cast<long double>(prime) / 2) {
    throw OverflowError("quantize: |q x| >= P/2");
  }
  const long double fl = std::floor(qx);
  return x >= 0 ? static_cast<std::int64_t>(fl) : static_cast<std::int64_t>(fl) + 1;
}

std::vector<std::int64_t> quantize_vector(std::span<const double> xs, std::uint64_t scale, std::uint64_t prime) {
  std::vector<std::int64_t> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(quantize(x, scale, prime));
  return out;
}

FeVec encode_vector(const PrimeField& f, std::span<const std::int64_t> xs) {
  FeVec out;
  out.reserve(xs.size());
  for (auto x : xs) out.push_back(f.encode(x));
  return out;
}

std::vector<std::int64_t> decode_vector(const PrimeField& f, std::span<const Fe> xs) {
  std::vector<std::int64_t> out;
  out.reserve(xs.size());
  for (auto x : xs) out.push_back(f.decode(x));
  return out;
}

}  // namespace rflpa
