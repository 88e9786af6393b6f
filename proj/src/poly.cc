// SPDX-License-Identifier: Apache-2.0
#include "rflpa/poly.h"

#include <algorithm>

#include "rflpa/linalg.h"

namespace rflpa::poly {

Fe eval(const PrimeField& f, std::span<const Fe> p, Fe x) {
  Fe acc{0};
  for (std::size_t i = p.size(); i-- > 0;) acc = f.add(f.mul(acc, x), p[i]);
  return acc;
}

void trim(Poly& p) {
  while (!p.empty() && p.back().v == 0) p.pop_back();
}

std::size_t degree(const Poly& p) {
  std::size_t d = p.size();
  while (d > 0 && p[d - 1].v == 0) --d;
  return d == 0 ? 0 : d - 1;
}

Poly add(const PrimeField& f, std::span<const Fe> a, std::span<const Fe> b) {
  Poly out(std::max(a.size(), b.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Fe x = i < a.size() ? a[i] : Fe{0};
    Fe y = i < b.size() ? b[i] : Fe{0};
    out[i] = f.add(x, y);
  }
  return out;
}

Poly sub(const PrimeField& f, std::span<const Fe> a, std::span<const Fe> b) {
  Poly out(std::max(a.size(), b.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Fe x = i < a.size() ? a[i] : Fe{0};
    Fe y = i < b.size() ? b[i] : Fe{0};
    out[i] = f.sub(x, y);
  }
  return out;
}

Poly mul(const PrimeField& f, std::span<const Fe> a, std::span<const Fe> b) {
  if (a.empty() || b.empty()) return {};
  Poly out(a.size() + b.size() - 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].v == 0) continue;
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] = f.add(out[i + j], f.mul(a[i], b[j]));
  }
  return out;
}

Poly scale(const PrimeField& f, std::span<const Fe> a, Fe c) {
  Poly out(a.begin(), a.end());
  for (auto& x : out) x = f.mul(x, c);
  return out;
}

Poly from_roots(const PrimeField& f, std::span<const Fe> roots) {
  Poly out{Fe{1}};
  for (Fe r : roots) {
    Poly next(out.size() + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
      next[i + 1] = f.add(next[i + 1], out[i]);
      next[i] = f.sub(next[i], f.mul(out[i], r));
    }
    out = std::move(next);
  }
  return out;
}

std::pair<Poly, Fe> divide_linear(const PrimeField& f, std::span<const Fe> p, Fe a) {
  if (p.empty()) return {Poly{}, Fe{0}};
  Poly q(p.size() - 1);
  Fe carry{0};
  for (std::size_t i = p.size(); i-- > 1;) {
    carry = f.add(p[i], f.mul(carry, a));
    q[i - 1] = carry;
  }
  return {q, f.add(p[0], f.mul(carry, a))};
}

std::pair<Poly, Poly> divmod(const PrimeField& f, Poly num, Poly den) {
  trim(num);
  trim(den);
  if (den.empty()) throw DomainError("polynomial division by zero");
  if (num.size() < den.size()) return {Poly{}, num};
  const Fe lead_inv = f.inv(den.back());
  Poly q(num.size() - den.size() + 1);
  for (std::size_t i = q.size(); i-- > 0;) {
    Fe c = f.mul(num[i + den.size() - 1], lead_inv);
    q[i] = c;
    if (c.v == 0) continue;
    for (std::size_t j = 0; j < den.size(); ++j) num[i + j] = f.sub(num[i + j], f.mul(c, den[j]));
  }
  num.resize(den.size() - 1);
  trim(num);
  return {q, num};
}

std::vector<Poly> lagrange_basis(const PrimeField& f, std::span<const Fe> xs) {
  const std::size_t n = xs.size();
  Poly all = from_roots(f, xs);
  std::vector<Poly> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [num, rem] = divide_linear(f, all, xs[i]);
    Fe denom{1};
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) denom = f.mul(denom, f.sub(xs[i], xs[j]));
    out.push_back(scale(f, num, f.inv(denom)));
  }
  return out;
}

Poly interpolate(const PrimeField& f, std::span<const Fe> xs, std::span<const Fe> ys) {
  if (xs.size() != ys.size()) throw DomainError("interpolate: size mismatch");
  const std::size_t n = xs.size();
  if (n == 0) return {};
  Poly all = from_roots(f, xs);
  Poly out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ys[i].v == 0) continue;
    auto [num, rem] = divide_linear(f, all, xs[i]);
    Fe denom{1};
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) denom = f.mul(denom, f.sub(xs[i], xs[j]));
    Fe c = f.mul(ys[i], f.inv(denom));
    for (std::size_t k = 0; k < num.size(); ++k) out[k] = f.add(out[k], f.mul(c, num[k]));
  }
  return out;
}

FeVec lagrange_weights(const PrimeField& f, std::span<const Fe> xs, Fe target) {
  const std::size_t n = xs.size();
  FeVec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (xs[i] == target) {
      std::fill(out.begin(), out.end(), Fe{0});
      out[i] = Fe{1};
      return out;
    }
  }
  FeVec denoms(n);
  Fe total{1};
  for (std::size_t i = 0; i < n; ++i) {
    total = f.mul(total, f.sub(target, xs[i]));
    Fe d{1};
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d = f.mul(d, f.sub(xs[i], xs[j]));
    denoms[i] = f.mul(d, f.sub(target, xs[i]));
  }
  FeVec inv = f.batch_inv(denoms);
  for (std::size_t i = 0; i < n; ++i) out[i] = f.mul(total, inv[i]);
  return out;
}

std::optional<Poly> berlekamp_welch(const PrimeField& f, std::span<const Fe> xs, std::span<const Fe> ys,
                                    std::size_t deg) {
  const std::size_t n = xs.size();
  const std::size_t k = deg + 1;
  if (n < k) return std::nullopt;
  const std::size_t e = (n - k) / 2;
  // Unknowns: Q_0..Q_{e+k-1}, then E_0..E_{e-1}; E is monic of degree e.
  const std::size_t nq = e + k;
  Matrix a(n, nq + e);
  FeVec b(n);
  for (std::size_t i = 0; i < n; ++i) {
    Fe pw{1};
    for (std::size_t j = 0; j < nq; ++j) {
      a(i, j) = pw;
      if (j < e) a(i, nq + j) = f.neg(f.mul(ys[i], pw));
      if (j == e) b[i] = f.mul(ys[i], pw);
      pw = f.mul(pw, xs[i]);
    }
  }
  auto sol = solve(f, std::move(a), std::move(b));
  if (!sol) return std::nullopt;
  Poly q(sol->begin(), sol->begin() + static_cast<std::ptrdiff_t>(nq));
  Poly err(sol->begin() + static_cast<std::ptrdiff_t>(nq), sol->end());
  err.push_back(Fe{1});
  auto [quot, rem] = divmod(f, q, err);
  if (!rem.empty()) return std::nullopt;
  trim(quot);
  if (quot.size() > k) return std::nullopt;
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (eval(f, quot, xs[i]) != ys[i]) ++mismatches;
  if (mismatches > e) return std::nullopt;
  quot.resize(k);
  return quot;
}

}  // namespace rflpa::poly
