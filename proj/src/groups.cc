// SPDX-License-Identifier: Apache-2.0
#include "rflpa/groups.h"

namespace rflpa::groups {

namespace {

constexpr u128 kGroupOrder = kMersenne61;
constexpr int kOrderBits = 61;

std::array<std::uint8_t, kElementBytes> to_bytes(u128 v) {
  std::array<std::uint8_t, kElementBytes> out{};
  for (std::size_t i = 0; i < kElementBytes; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return out;
}

u128 from_bytes(std::span<const std::uint8_t> b) {
  u128 v = 0;
  for (std::size_t i = kElementBytes; i-- > 0;) v = (v << 8) | b[i];
  return v;
}

}  // namespace

SchnorrGroup::SchnorrGroup() : mont_(kSchnorrModulus) {
  const u128 cofactor = (kSchnorrModulus - 1) / kGroupOrder;
  for (u128 h = 2;; ++h) {
    gen_ = mont_.pow(mont_.to_mont(h), cofactor);
    if (gen_ != mont_.one()) break;
  }
  table_.resize((kOrderBits + 7) / 8);
  Element base = gen_;
  for (auto& window : table_) {
    window[0] = mont_.one();
    for (int k = 1; k < 256; ++k) window[k] = mont_.mul(window[k - 1], base);
    base = mont_.mul(window[255], base);  // base^256
  }
}

SchnorrGroup::Element SchnorrGroup::pow_gen(Fe exponent) const {
  Element r = mont_.one();
  std::uint64_t e = exponent.v;
  for (std::size_t w = 0; e != 0; ++w, e >>= 8) {
    if (e & 0xff) r = mont_.mul(r, table_[w][e & 0xff]);
  }
  return r;
}

SchnorrGroup::Element SchnorrGroup::multi_pow(std::span<const Element> bases, std::span<const Fe> exps) const {
  if (bases.size() != exps.size()) throw DomainError("multi_pow: size mismatch");
  Element r = mont_.one();
  for (int bit = kOrderBits - 1; bit >= 0; --bit) {
    r = mont_.sqr(r);
    for (std::size_t i = 0; i < bases.size(); ++i)
      if ((exps[i].v >> bit) & 1) r = mont_.mul(r, bases[i]);
  }
  return r;
}

bool SchnorrGroup::is_member(Element a) const {
  if (a == 0 || mont_.from_mont(a) >= kSchnorrModulus) return false;
  return mont_.pow(a, kGroupOrder) == mont_.one();
}

std::array<std::uint8_t, kElementBytes> SchnorrGroup::encode(Element a) const { return to_bytes(mont_.from_mont(a)); }

std::optional<SchnorrGroup::Element> SchnorrGroup::decode(std::span<const std::uint8_t> bytes) const {
  if (bytes.size() != kElementBytes) return std::nullopt;
  const u128 v = from_bytes(bytes);
  if (v == 0 || v >= kSchnorrModulus) return std::nullopt;
  Element a = mont_.to_mont(v);
  if (!is_member(a)) return std::nullopt;
  return a;
}

// ---------------------------------------------------------------------------

TypeACurve::TypeACurve() : fq_(kCurveModulus) {
  const u128 cofactor = (kCurveModulus + 1) / kGroupOrder;
  for (u128 x = 1;; ++x) {
    const u128 xm = fq_.to_mont(x);
    const u128 rhs = fq_.add(fq_.mul(fq_.sqr(xm), xm), xm);
    auto y = sqrt(rhs);
    if (!y) continue;
    CurvePoint p{xm, *y, false};
    gen_ = mul(p, cofactor);
    if (!gen_.infinity) break;
  }
}

std::optional<u128> TypeACurve::sqrt(u128 a) const {
  const u128 r = fq_.pow(a, (kCurveModulus + 1) / 4);
  if (fq_.sqr(r) != a) return std::nullopt;
  return r;
}

bool TypeACurve::on_curve(const CurvePoint& p) const {
  if (p.infinity) return true;
  const u128 rhs = fq_.add(fq_.mul(fq_.sqr(p.x), p.x), p.x);
  return fq_.sqr(p.y) == rhs;
}

bool TypeACurve::in_subgroup(const CurvePoint& p) const {
  return on_curve(p) && mul(p, kGroupOrder).infinity;
}

CurvePoint TypeACurve::neg(const CurvePoint& p) const {
  if (p.infinity) return p;
  return CurvePoint{p.x, fq_.neg(p.y), false};
}

CurvePoint TypeACurve::dbl(const CurvePoint& a) const {
  if (a.infinity || a.y == 0) return infinity();
  const u128 x2 = fq_.sqr(a.x);
  const u128 num = fq_.add(fq_.add(fq_.add(x2, x2), x2), fq_.one());
  const u128 lambda = fq_.mul(num, fq_.inv(fq_.add(a.y, a.y)));
  const u128 x3 = fq_.sub(fq_.sqr(lambda), fq_.add(a.x, a.x));
  const u128 y3 = fq_.sub(fq_.mul(lambda, fq_.sub(a.x, x3)), a.y);
  return CurvePoint{x3, y3, false};
}

CurvePoint TypeACurve::add(const CurvePoint& a, const CurvePoint& b) const {
  if (a.infinity) return b;
  if (b.infinity) return a;
  if (a.x == b.x) return a.y == b.y ? dbl(a) : infinity();
  const u128 lambda = fq_.mul(fq_.sub(b.y, a.y), fq_.inv(fq_.sub(b.x, a.x)));
  const u128 x3 = fq_.sub(fq_.sub(fq_.sqr(lambda), a.x), b.x);
  const u128 y3 = fq_.sub(fq_.mul(lambda, fq_.sub(a.x, x3)), a.y);
  return CurvePoint{x3, y3, false};
}

TypeACurve::Jacobian TypeACurve::to_jacobian(const CurvePoint& p) const {
  if (p.infinity) return Jacobian{fq_.one(), fq_.one(), 0};
  return Jacobian{p.x, p.y, fq_.one()};
}

CurvePoint TypeACurve::to_affine(const Jacobian& p) const {
  if (p.z == 0) return infinity();
  const u128 zi = fq_.inv(p.z);
  const u128 zi2 = fq_.sqr(zi);
  return CurvePoint{fq_.mul(p.x, zi2), fq_.mul(p.y, fq_.mul(zi2, zi)), false};
}

// dbl-2007-bl with curve coefficient a = 1.
TypeACurve::Jacobian TypeACurve::jdbl(const Jacobian& p) const {
  if (p.z == 0 || p.y == 0) return Jacobian{fq_.one(), fq_.one(), 0};
  const u128 xx = fq_.sqr(p.x), yy = fq_.sqr(p.y), yyyy = fq_.sqr(yy), zz = fq_.sqr(p.z);
  u128 s = fq_.sub(fq_.sub(fq_.sqr(fq_.add(p.x, yy)), xx), yyyy);
  s = fq_.add(s, s);
  const u128 m = fq_.add(fq_.add(fq_.add(xx, xx), xx), fq_.sqr(zz));
  const u128 t = fq_.sub(fq_.sqr(m), fq_.add(s, s));
  u128 y8 = fq_.add(yyyy, yyyy);
  y8 = fq_.add(y8, y8);
  y8 = fq_.add(y8, y8);
  const u128 y3 = fq_.sub(fq_.mul(m, fq_.sub(s, t)), y8);
  const u128 z3 = fq_.sub(fq_.sub(fq_.sqr(fq_.add(p.y, p.z)), yy), zz);
  return Jacobian{t, y3, z3};
}

// madd-2007-bl (second operand affine).
TypeACurve::Jacobian TypeACurve::jadd_mixed(const Jacobian& p, const CurvePoint& q) const {
  if (q.infinity) return p;
  if (p.z == 0) return to_jacobian(q);
  const u128 z1z1 = fq_.sqr(p.z);
  const u128 u2 = fq_.mul(q.x, z1z1);
  const u128 s2 = fq_.mul(q.y, fq_.mul(p.z, z1z1));
  const u128 h = fq_.sub(u2, p.x);
  u128 r = fq_.sub(s2, p.y);
  if (h == 0) return r == 0 ? jdbl(p) : Jacobian{fq_.one(), fq_.one(), 0};
  r = fq_.add(r, r);
  const u128 hh = fq_.sqr(h);
  u128 i = fq_.add(hh, hh);
  i = fq_.add(i, i);
  const u128 j = fq_.mul(h, i);
  const u128 v = fq_.mul(p.x, i);
  const u128 x3 = fq_.sub(fq_.sub(fq_.sqr(r), j), fq_.add(v, v));
  u128 yj = fq_.mul(p.y, j);
  yj = fq_.add(yj, yj);
  const u128 y3 = fq_.sub(fq_.mul(r, fq_.sub(v, x3)), yj);
  const u128 z3 = fq_.sub(fq_.sub(fq_.sqr(fq_.add(p.z, h)), z1z1), hh);
  return Jacobian{x3, y3, z3};
}

CurvePoint TypeACurve::mul(const CurvePoint& p, u128 scalar) const {
  if (p.infinity || scalar == 0) return infinity();
  Jacobian acc{fq_.one(), fq_.one(), 0};
  int top = 127;
  while (((scalar >> top) & 1) == 0) --top;
  for (int bit = top; bit >= 0; --bit) {
    acc = jdbl(acc);
    if ((scalar >> bit) & 1) acc = jadd_mixed(acc, p);
  }
  return to_affine(acc);
}

CurvePoint TypeACurve::multi_mul(std::span<const CurvePoint> points, std::span<const Fe> scalars) const {
  if (points.size() != scalars.size()) throw DomainError("multi_mul: size mismatch");
  Jacobian acc{fq_.one(), fq_.one(), 0};
  for (int bit = kOrderBits; bit >= 0; --bit) {
    acc = jdbl(acc);
    for (std::size_t i = 0; i < points.size(); ++i)
      if ((scalars[i].v >> bit) & 1) acc = jadd_mixed(acc, points[i]);
  }
  return to_affine(acc);
}

Fq2 TypeACurve::fq2_mul(const Fq2& a, const Fq2& b) const {
  const u128 ac = fq_.mul(a.re, b.re), bd = fq_.mul(a.im, b.im);
  const u128 cross = fq_.mul(fq_.add(a.re, a.im), fq_.add(b.re, b.im));
  return Fq2{fq_.sub(ac, bd), fq_.sub(fq_.sub(cross, ac), bd)};
}

Fq2 TypeACurve::fq2_sqr(const Fq2& a) const {
  const u128 re = fq_.mul(fq_.add(a.re, a.im), fq_.sub(a.re, a.im));
  const u128 ab = fq_.mul(a.re, a.im);
  return Fq2{re, fq_.add(ab, ab)};
}

Fq2 TypeACurve::fq2_inv(const Fq2& a) const {
  const u128 norm = fq_.add(fq_.sqr(a.re), fq_.sqr(a.im));
  const u128 ni = fq_.inv(norm);
  return Fq2{fq_.mul(a.re, ni), fq_.neg(fq_.mul(a.im, ni))};
}

Fq2 TypeACurve::fq2_pow(Fq2 a, u128 e) const {
  Fq2 r = fq2_one();
  while (e) {
    if (e & 1) r = fq2_mul(r, a);
    a = fq2_sqr(a);
    e >>= 1;
  }
  return r;
}

Fq2 TypeACurve::pairing(const CurvePoint& a, const CurvePoint& b) const {
  if (a.infinity || b.infinity) return fq2_one();
  // Miller loop for r = 2^61 - 1 in NAF form (2^61 - 2^0). The second argument
  // enters as distort(b) = (-x_b, i y_b); vertical lines lie in F_q and are
  // killed by the final exponentiation, so only the non-vertical lines
  //   l(X, Y) = Y - y_T - lambda (X - x_T)
  // are evaluated: l = (lambda (x_b + x_T) - y_T) + i y_b.
  auto line = [&](const CurvePoint& t, u128 lambda) {
    return Fq2{fq_.sub(fq_.mul(lambda, fq_.add(b.x, t.x)), t.y), b.y};
  };
  Fq2 f = fq2_one();
  CurvePoint t = a;
  for (int bit = kOrderBits - 1; bit >= 0; --bit) {
    f = fq2_sqr(f);
    if (t.infinity || t.y == 0) return fq2_one();
    const u128 x2 = fq_.sqr(t.x);
    const u128 lambda = fq_.mul(fq_.add(fq_.add(fq_.add(x2, x2), x2), fq_.one()), fq_.inv(fq_.add(t.y, t.y)));
    f = fq2_mul(f, line(t, lambda));
    const u128 x3 = fq_.sub(fq_.sqr(lambda), fq_.add(t.x, t.x));
    t = CurvePoint{x3, fq_.sub(fq_.mul(lambda, fq_.sub(t.x, x3)), t.y), false};
  }
  // Trailing NAF digit -1: T = 2^61 a = a, so T + (-a) is a vertical line.
  // Final exponent (q^2 - 1) / r = (q - 1) * 20, with f^(q-1) = conj(f) / f.
  const Fq2 conj{f.re, fq_.neg(f.im)};
  const Fq2 g = fq2_mul(conj, fq2_inv(f));
  return fq2_pow(g, (kCurveModulus + 1) / kGroupOrder);
}

std::array<std::uint8_t, kElementBytes> TypeACurve::encode(const CurvePoint& p) const {
  if (p.infinity) return to_bytes(static_cast<u128>(1) << 67);
  u128 v = fq_.from_mont(p.x);
  if (fq_.from_mont(p.y) & 1) v |= static_cast<u128>(1) << 66;
  return to_bytes(v);
}

std::optional<CurvePoint> TypeACurve::decode(std::span<const std::uint8_t> bytes) const {
  if (bytes.size() != kElementBytes) return std::nullopt;
  const u128 v = from_bytes(bytes);
  if (v >> 68) return std::nullopt;
  if ((v >> 67) & 1) {
    if (v != (static_cast<u128>(1) << 67)) return std::nullopt;
    return infinity();
  }
  const u128 x = v & ((static_cast<u128>(1) << 66) - 1);
  const bool odd = (v >> 66) & 1;
  if (x >= kCurveModulus) return std::nullopt;
  const u128 xm = fq_.to_mont(x);
  auto y = sqrt(fq_.add(fq_.mul(fq_.sqr(xm), xm), xm));
  if (!y) return std::nullopt;
  u128 yv = fq_.from_mont(*y);
  if (yv == 0 && odd) return std::nullopt;
  if ((yv & 1) != static_cast<u128>(odd)) yv = kCurveModulus - yv;
  CurvePoint p{xm, fq_.to_mont(yv), false};
  if (!in_subgroup(p)) return std::nullopt;
  return p;
}

}  // namespace rflpa::groups
