// Copyright 2026 The natgrad Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense real linear algebra at desk scale. Matrices are row-major and owned by
// value; every routine is a pure function of its arguments.

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include "natgrad/kernels.hpp"

namespace natgrad {

class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  DenseVector(std::initializer_list<double> values) : values_(values) {}
  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}
  explicit DenseVector(std::span<const double> values) : values_(values.begin(), values.end()) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  operator std::span<const double>() const { return values_; }
  operator std::span<double>() { return values_; }
  std::span<const double> span() const { return values_; }

  const std::vector<double>& values() const { return values_; }

  bool operator==(const DenseVector&) const = default;

 private:
  std::vector<double> values_;
};

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_rows(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool is_square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<const double> flat() const { return values_; }

  kernels::ConstMatrixView view() const { return {values_.data(), rows_, cols_}; }

  DenseMatrix transpose() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Vector helpers.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
DenseVector operator+(const DenseVector& a, const DenseVector& b);
DenseVector operator-(const DenseVector& a, const DenseVector& b);
DenseVector operator*(double c, const DenseVector& a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double max_abs(std::span<const double> a);
bool all_finite(std::span<const double> a);

// Matrix helpers. The products route through the parallel kernels.
DenseVector matvec(const DenseMatrix& a, std::span<const double> x);
DenseVector matvec_transposed(const DenseMatrix& a, std::span<const double> x);
DenseMatrix gram(const DenseMatrix& a);           // A Aᵀ
DenseMatrix cross_product(const DenseMatrix& a);  // Aᵀ A
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator*(double c, const DenseMatrix& a);
double trace(const DenseMatrix& a);
double max_abs(const DenseMatrix& a);
bool is_symmetric(const DenseMatrix& a, double rel_tol = 1e-10);

/// Kronecker product. With W stored row-major and vec(W) stacking its rows,
/// (A ⊗ B) vec(X) = vec(A X Bᵀ).
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b);

/// Lower Cholesky factor of A + ridge·I.
class Cholesky {
 public:
  /// Returns nullopt when a pivot is not strictly positive.
  static std::optional<Cholesky> factor(const DenseMatrix& a, double ridge);

  DenseVector solve(std::span<const double> b) const;
  std::size_t size() const { return lower_.rows(); }
  const DenseMatrix& lower() const { return lower_; }

 private:
  explicit Cholesky(DenseMatrix lower) : lower_(std::move(lower)) {}
  DenseMatrix lower_;
};

struct SpdSolution {
  DenseVector x;
  // Ridge that was actually applied; differs from the request after a retry.
  double ridge = 0.0;
};

/// Solves (A + ridge·I) x = b for symmetric PSD A. On a failed factorization
/// the solve is retried once at 10·ridge (or at 1e-12·mean(diag A) when the
/// requested ridge is zero) before SingularAfterRidge is raised.
SpdSolution solve_spd_detailed(const DenseMatrix& a, std::span<const double> b, double ridge);
DenseVector solve_spd(const DenseMatrix& a, std::span<const double> b, double ridge);

/// Jᵀ (J Jᵀ + ridge·I)⁻¹ rhs, i.e. (JᵀJ + ridge·I)⁻¹ Jᵀ rhs via the
/// sample-space system. Requires ridge > 0.
DenseVector woodbury_solve(const DenseMatrix& j, std::span<const double> rhs, double ridge);

/// (UᵀU + ridge·I)⁻¹ v = (1/ridge)[v − Uᵀ(UUᵀ + ridge·I)⁻¹ U v]. Requires ridge > 0.
DenseVector smw_solve(const DenseMatrix& u, std::span<const double> v, double ridge);

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
/// Intended for the small matrices used in invariant checks.
std::vector<double> symmetric_eigenvalues(const DenseMatrix& a);

/// 2-norm condition number of a symmetric PSD matrix; infinity when singular.
double spd_condition(const DenseMatrix& a);

}  // namespace natgrad
