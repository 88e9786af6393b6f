// SPDX-License-Identifier: Apache-2.0
//
// Prime-order groups of order P = 2^61 - 1 used by the commitment backends:
//   - the order-P subgroup of Z_Q^*, Q = 52 P + 1 (67-bit);
//   - the order-P subgroup of E: y^2 = x^3 + x over F_q, q = 20 P - 1 (66-bit,
//     q = 3 mod 4, supersingular, #E = q + 1), with the reduced Tate pairing
//     composed with the distortion map (x, y) -> (-x, i y) into F_{q^2}.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rflpa/field.h"
#include "rflpa/mont128.h"

namespace rflpa::groups {

inline constexpr u128 kSchnorrModulus = static_cast<u128>(52) * kMersenne61 + 1;
inline constexpr u128 kCurveModulus = static_cast<u128>(20) * kMersenne61 - 1;
inline constexpr std::size_t kElementBytes = 9;

// Elements are kept in Montgomery form.
class SchnorrGroup {
 public:
  using Element = u128;

  SchnorrGroup();

  Element identity() const { return mont_.one(); }
  Element generator() const { return gen_; }
  Element mul(Element a, Element b) const { return mont_.mul(a, b); }
  Element inv(Element a) const { return mont_.inv(a); }
  Element pow(Element base, Fe exponent) const { return mont_.pow(base, exponent.v); }
  // generator^e from a precomputed 8-bit window table.
  Element pow_gen(Fe exponent) const;
  // prod bases[i]^exps[i] by interleaved square-and-multiply.
  Element multi_pow(std::span<const Element> bases, std::span<const Fe> exps) const;

  bool is_member(Element a) const;

  std::array<std::uint8_t, kElementBytes> encode(Element a) const;
  // nullopt for non-canonical encodings or values outside the subgroup.
  std::optional<Element> decode(std::span<const std::uint8_t> bytes) const;

  const Mont128& mont() const { return mont_; }

 private:
  Mont128 mont_;
  Element gen_;
  std::vector<std::array<Element, 256>> table_;
};

// F_{q^2} = F_q[i] / (i^2 + 1); components in Montgomery form.
struct Fq2 {
  u128 re = 0;
  u128 im = 0;
  friend bool operator==(const Fq2&, const Fq2&) = default;
};

struct CurvePoint {
  u128 x = 0;  // Montgomery form
  u128 y = 0;
  bool infinity = true;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

class TypeACurve {
 public:
  TypeACurve();

  const Mont128& fq() const { return fq_; }
  CurvePoint generator() const { return gen_; }
  CurvePoint infinity() const { return CurvePoint{}; }

  bool on_curve(const CurvePoint& p) const;
  bool in_subgroup(const CurvePoint& p) const;

  CurvePoint neg(const CurvePoint& p) const;
  CurvePoint add(const CurvePoint& a, const CurvePoint& b) const;
  CurvePoint dbl(const CurvePoint& a) const;
  CurvePoint mul(const CurvePoint& p, u128 scalar) const;
  CurvePoint mul(const CurvePoint& p, Fe scalar) const { return mul(p, static_cast<u128>(scalar.v)); }
  // sum scalars[i] * points[i]
  CurvePoint multi_mul(std::span<const CurvePoint> points, std::span<const Fe> scalars) const;

  // Reduced Tate pairing e(a, distort(b)) of order-P points.
  Fq2 pairing(const CurvePoint& a, const CurvePoint& b) const;

  Fq2 fq2_mul(const Fq2& a, const Fq2& b) const;
  Fq2 fq2_one() const { return Fq2{fq_.one(), 0}; }
  Fq2 fq2_pow(Fq2 a, u128 e) const;

  // Compressed: x in the low 66 bits, bit 66 = parity of y, bit 67 = infinity.
  std::array<std::uint8_t, kElementBytes> encode(const CurvePoint& p) const;
  std::optional<CurvePoint> decode(std::span<const std::uint8_t> bytes) const;

 private:
  struct Jacobian {
    u128 x, y, z;  // z == 0 is infinity
  };
  Jacobian to_jacobian(const CurvePoint& p) const;
  CurvePoint to_affine(const Jacobian& p) const;
  Jacobian jdbl(const Jacobian& p) const;
  Jacobian jadd_mixed(const Jacobian& p, const CurvePoint& q) const;
  Fq2 fq2_sqr(const Fq2& a) const;
  Fq2 fq2_inv(const Fq2& a) const;
  std::optional<u128> sqrt(u128 a) const;

  Mont128 fq_;
  CurvePoint gen_;
};

}  // namespace rflpa::groups
