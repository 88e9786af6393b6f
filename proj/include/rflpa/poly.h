// SPDX-License-Identifier: Apache-2.0
//
// Dense univariate polynomials over F_P, coefficients stored low to high.
#pragma once

#include <optional>
#include <span>
#include <utility>

#include "rflpa/field.h"

namespace rflpa::poly {

using Poly = FeVec;

Fe eval(const PrimeField& f, std::span<const Fe> p, Fe x);
void trim(Poly& p);
std::size_t degree(const Poly& p);  // degree of the zero polynomial is 0

Poly add(const PrimeField& f, std::span<const Fe> a, std::span<const Fe> b);
Poly sub(const PrimeField& f, std::span<const Fe> a, std::span<const Fe> b);
Poly mul(const PrimeField& f, std::span<const Fe> a, std::span<const Fe> b);
Poly scale(const PrimeField& f, std::span<const Fe> a, Fe c);

// prod (x - r_i)
Poly from_roots(const PrimeField& f, std::span<const Fe> roots);

// (p(x) - p(a)) / (x - a) by synthetic division; second is p(a).
std::pair<Poly, Fe> divide_linear(const PrimeField& f, std::span<const Fe> p, Fe a);

// Quotient and remainder; divisor must be nonzero.
std::pair<Poly, Poly> divmod(const PrimeField& f, Poly num, Poly den);

// Lagrange interpolation through (xs_i, ys_i); xs distinct. O(n^2).
Poly interpolate(const PrimeField& f, std::span<const Fe> xs, std::span<const Fe> ys);

// L_i(target) for the Lagrange basis over xs.
FeVec lagrange_weights(const PrimeField& f, std::span<const Fe> xs, Fe target);

// Coefficients of every Lagrange basis polynomial over xs (row i = L_i).
std::vector<Poly> lagrange_basis(const PrimeField& f, std::span<const Fe> xs);

// Berlekamp-Welch: the unique polynomial of degree <= deg within distance
// floor((n - deg - 1) / 2) of the points, or nullopt.
std::optional<Poly> berlekamp_welch(const PrimeField& f, std::span<const Fe> xs, std::span<const Fe> ys,
                                    std::size_t deg);

}  // namespace rflpa::poly
