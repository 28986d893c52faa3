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

#include "natgrad/oracle.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "natgrad/error.hpp"

namespace natgrad::oracle {

namespace {

using Real = long double;

DenseVector eliminate(std::vector<Real> m, std::vector<Real> rhs, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::fabs(m[i * n + k]) > std::fabs(m[pivot * n + k])) pivot = i;
    }
    if (m[pivot * n + k] == 0.0L) throw Error(ErrorCode::kSingularAfterRidge, "oracle: singular matrix");
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m[k * n + j], m[pivot * n + j]);
      std::swap(rhs[k], rhs[pivot]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const Real f = m[i * n + k] / m[k * n + k];
      if (f == 0.0L) continue;
      for (std::size_t j = k; j < n; ++j) m[i * n + j] -= f * m[k * n + j];
      rhs[i] -= f * rhs[k];
    }
  }
  DenseVector x(n);
  std::vector<Real> xs(n);
  for (std::size_t k = n; k-- > 0;) {
    Real acc = rhs[k];
    for (std::size_t j = k + 1; j < n; ++j) acc -= m[k * n + j] * xs[j];
    xs[k] = acc / m[k * n + k];
    x[k] = static_cast<double>(xs[k]);
  }
  return x;
}

std::vector<Real> gram_columns(const DenseMatrix& u, double ridge) {
  const std::size_t p = u.cols();
  std::vector<Real> m(p * p, 0.0L);
  for (std::size_t n = 0; n < u.rows(); ++n) {
    for (std::size_t i = 0; i < p; ++i) {
      const Real ui = u(n, i);
      for (std::size_t j = 0; j < p; ++j) m[i * p + j] += ui * static_cast<Real>(u(n, j));
    }
  }
  for (std::size_t i = 0; i < p; ++i) m[i * p + i] += ridge;
  return m;
}

}  // namespace

DenseVector solve(const DenseMatrix& a, std::span<const double> b, double ridge) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw Error(ErrorCode::kShapeMismatch, "oracle::solve");
  std::vector<Real> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = a(i, j);
    m[i * n + i] += ridge;
  }
  return eliminate(std::move(m), std::vector<Real>(b.begin(), b.end()), n);
}

DenseVector ridge_solve(const DenseMatrix& j, std::span<const double> r, double ridge) {
  if (r.size() != j.rows()) throw Error(ErrorCode::kShapeMismatch, "oracle::ridge_solve");
  const std::size_t p = j.cols();
  std::vector<Real> rhs(p, 0.0L);
  for (std::size_t n = 0; n < j.rows(); ++n) {
    for (std::size_t i = 0; i < p; ++i) rhs[i] += static_cast<Real>(j(n, i)) * r[n];
  }
  return eliminate(gram_columns(j, ridge), std::move(rhs), p);
}

DenseVector gram_inverse_apply(const DenseMatrix& u, std::span<const double> v, double ridge) {
  if (v.size() != u.cols()) throw Error(ErrorCode::kShapeMismatch, "oracle::gram_inverse_apply");
  return eliminate(gram_columns(u, ridge), std::vector<Real>(v.begin(), v.end()), u.cols());
}

double relative_error(std::span<const double> x, std::span<const double> ref) {
  if (x.size() != ref.size()) throw Error(ErrorCode::kShapeMismatch, "oracle::relative_error");
  Real num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real d = static_cast<Real>(x[i]) - ref[i];
    num += d * d;
    den += static_cast<Real>(ref[i]) * ref[i];
  }
  return static_cast<double>(den > 0.0L ? std::sqrt(num / den) : std::sqrt(num));
}

}  // namespace natgrad::oracle
