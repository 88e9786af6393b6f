// SPDX-License-Identifier: Apache-2.0
#include "rflpa/linalg.h"

namespace rflpa {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = Fe{1};
  return m;
}

Matrix matmul(const PrimeField& f, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DomainError("matmul: dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      DotAccumulator acc(f);
      for (std::size_t k = 0; k < a.cols(); ++k) acc.add(a(i, k), b(k, j));
      out(i, j) = acc.value();
    }
  }
  return out;
}

FeVec vecmat(const PrimeField& f, std::span<const Fe> v, const Matrix& m) {
  if (v.size() != m.rows()) throw DomainError("vecmat: dimension mismatch");
  FeVec out(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    DotAccumulator acc(f);
    for (std::size_t i = 0; i < m.rows(); ++i) acc.add(v[i], m(i, j));
    out[j] = acc.value();
  }
  return out;
}

FeVec matvec(const PrimeField& f, const Matrix& m, std::span<const Fe> v) {
  if (v.size() != m.cols()) throw DomainError("matvec: dimension mismatch");
  FeVec out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    DotAccumulator acc(f);
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) acc.add(r[j], v[j]);
    out[i] = acc.value();
  }
  return out;
}

namespace {

// Reduces [a | aug] to reduced row echelon form in place; returns pivot
// columns of a.
std::vector<std::size_t> rref(const PrimeField& f, Matrix& a, Matrix* aug) {
  std::vector<std::size_t> pivots;
  std::size_t r = 0;
  for (std::size_t c = 0; c < a.cols() && r < a.rows(); ++c) {
    std::size_t piv = r;
    while (piv < a.rows() && a(piv, c).v == 0) ++piv;
    if (piv == a.rows()) continue;
    if (piv != r) {
      for (std::size_t k = 0; k < a.cols(); ++k) std::swap(a(piv, k), a(r, k));
      if (aug)
        for (std::size_t k = 0; k < aug->cols(); ++k) std::swap((*aug)(piv, k), (*aug)(r, k));
    }
    const Fe inv = f.inv(a(r, c));
    for (std::size_t k = 0; k < a.cols(); ++k) a(r, k) = f.mul(a(r, k), inv);
    if (aug)
      for (std::size_t k = 0; k < aug->cols(); ++k) (*aug)(r, k) = f.mul((*aug)(r, k), inv);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (i == r || a(i, c).v == 0) continue;
      const Fe factor = a(i, c);
      for (std::size_t k = c; k < a.cols(); ++k) a(i, k) = f.sub(a(i, k), f.mul(factor, a(r, k)));
      if (aug)
        for (std::size_t k = 0; k < aug->cols(); ++k)
          (*aug)(i, k) = f.sub((*aug)(i, k), f.mul(factor, (*aug)(r, k)));
    }
    pivots.push_back(c);
    ++r;
  }
  return pivots;
}

}  // namespace

Matrix inverse(const PrimeField& f, Matrix m) {
  if (m.rows() != m.cols()) throw DomainError("inverse: matrix not square");
  Matrix inv = Matrix::identity(m.rows());
  auto pivots = rref(f, m, &inv);
  if (pivots.size() != m.rows()) throw DomainError("inverse: matrix is singular");
  return inv;
}

std::size_t rank(const PrimeField& f, Matrix m) { return rref(f, m, nullptr).size(); }

std::optional<FeVec> solve(const PrimeField& f, Matrix a, FeVec b) {
  if (b.size() != a.rows()) throw DomainError("solve: dimension mismatch");
  Matrix aug(b.size(), 1);
  for (std::size_t i = 0; i < b.size(); ++i) aug(i, 0) = b[i];
  auto pivots = rref(f, a, &aug);
  for (std::size_t i = pivots.size(); i < a.rows(); ++i) {
    if (aug(i, 0).v != 0) return std::nullopt;
  }
  FeVec x(a.cols());
  for (std::size_t i = 0; i < pivots.size(); ++i) x[pivots[i]] = aug(i, 0);
  return x;
}

}  // namespace rflpa
