// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "rflpa/field.h"

namespace rflpa {

// Row-major dense matrix over F_P.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Fe& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Fe operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const Fe> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  FeVec data_;
};

Matrix matmul(const PrimeField& f, const Matrix& a, const Matrix& b);
// Row vector times matrix.
FeVec vecmat(const PrimeField& f, std::span<const Fe> v, const Matrix& m);
FeVec matvec(const PrimeField& f, const Matrix& m, std::span<const Fe> v);

// Throws DomainError when singular.
Matrix inverse(const PrimeField& f, Matrix m);
std::size_t rank(const PrimeField& f, Matrix m);

// One solution of a x = b (free variables set to zero), or nullopt if
// inconsistent.
std::optional<FeVec> solve(const PrimeField& f, Matrix a, FeVec b);

}  // namespace rflpa
