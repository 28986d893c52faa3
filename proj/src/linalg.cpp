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

#include "natgrad/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "natgrad/error.hpp"

namespace natgrad {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNotSquare: return "NotSquare";
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kSingularAfterRidge: return "SingularAfterRidge";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kZeroScale: return "ZeroScale";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kOrthogonalUpdate: return "OrthogonalUpdate";
    case ErrorCode::kDivergenceDetected: return "DivergenceDetected";
    case ErrorCode::kRankDeficiency: return "RankDeficiency";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kMissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": " << a << " vs " << b;
    throw Error(ErrorCode::kShapeMismatch, os.str());
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require_same_size(r.size(), cols_, "ragged initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_rows(std::size_t rows, std::size_t cols, std::vector<double> values) {
  require_same_size(values.size(), rows * cols, "from_rows");
  DenseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.values_ = std::move(values);
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) {
  // Scaled accumulation; per-sample gradients near convergence underflow otherwise.
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double acc = 0.0;
  for (double v : a) {
    const double r = v / scale;
    acc += r * r;
  }
  return scale * std::sqrt(acc);
}

DenseVector operator+(const DenseVector& a, const DenseVector& b) {
  require_same_size(a.size(), b.size(), "vector +");
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

DenseVector operator-(const DenseVector& a, const DenseVector& b) {
  require_same_size(a.size(), b.size(), "vector -");
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

DenseVector operator*(double c, const DenseVector& a) {
  DenseVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

DenseVector matvec(const DenseMatrix& a, std::span<const double> x) {
  require_same_size(a.cols(), x.size(), "matvec");
  DenseVector y(a.rows());
  kernels::parallel::matvec(a.view(), x, y);
  return y;
}

DenseVector matvec_transposed(const DenseMatrix& a, std::span<const double> x) {
  require_same_size(a.rows(), x.size(), "matvec_transposed");
  DenseVector y(a.cols());
  kernels::parallel::matvec_transposed(a.view(), x, y);
  return y;
}

DenseMatrix gram(const DenseMatrix& a) {
  std::vector<double> out(a.rows() * a.rows());
  kernels::parallel::gram(a.view(), out);
  return DenseMatrix::from_rows(a.rows(), a.rows(), std::move(out));
}

DenseMatrix cross_product(const DenseMatrix& a) {
  std::vector<double> out(a.cols() * a.cols());
  kernels::parallel::cross_product(a.view(), out);
  return DenseMatrix::from_rows(a.cols(), a.cols(), std::move(out));
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_size(a.cols(), b.rows(), "multiply");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_size(a.rows(), b.rows(), "matrix + rows");
  require_same_size(a.cols(), b.cols(), "matrix + cols");
  DenseMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
  return c;
}

DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_size(a.rows(), b.rows(), "matrix - rows");
  require_same_size(a.cols(), b.cols(), "matrix - cols");
  DenseMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
  return c;
}

DenseMatrix operator*(double s, const DenseMatrix& a) {
  DenseMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = s * a.data()[i];
  return c;
}

double trace(const DenseMatrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::kNotSquare, "trace");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double max_abs(const DenseMatrix& a) { return max_abs(a.flat()); }

bool is_symmetric(const DenseMatrix& a, double rel_tol) {
  if (!a.is_square()) return false;
  const double tol = rel_tol * std::max(max_abs(a), std::numeric_limits<double>::min());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

std::optional<Cholesky> Cholesky::factor(const DenseMatrix& a, double ridge) {
  if (!a.is_square()) throw Error(ErrorCode::kNotSquare, "cholesky");
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i) + ridge);
  // Pivots this far below the largest diagonal entry mean the matrix is
  // singular to working precision.
  const double pivot_floor = 1e-14 * max_diag;

  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + ridge;
    const auto lj = l.row(j);
    for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
    if (!(d > pivot_floor) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      const auto li = l.row(i);
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / ljj;
    }
  }
  return Cholesky(std::move(l));
}

DenseVector Cholesky::solve(std::span<const double> b) const {
  const std::size_t n = lower_.rows();
  require_same_size(b.size(), n, "cholesky solve");
  DenseVector y(b);
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = lower_.row(i);
    double s = y[i];
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * y[k];
    y[i] = s / li[i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower_(k, ii) * y[k];
    y[ii] = s / lower_(ii, ii);
  }
  return y;
}

SpdSolution solve_spd_detailed(const DenseMatrix& a, std::span<const double> b, double ridge) {
  if (!a.is_square()) throw Error(ErrorCode::kNotSquare, "solve_spd");
  require_same_size(a.rows(), b.size(), "solve_spd rhs");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "ridge must be >= 0");
  if (!is_symmetric(a)) throw Error(ErrorCode::kNotSymmetric, "solve_spd");
  if (a.rows() == 0) return {DenseVector{}, ridge};

  if (auto chol = Cholesky::factor(a, ridge)) return {chol->solve(b), ridge};

  double retry = 10.0 * ridge;
  if (retry == 0.0) {
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) mean_diag += std::abs(a(i, i));
    mean_diag /= static_cast<double>(a.rows());
    retry = 1e-12 * (mean_diag > 0.0 ? mean_diag : 1.0);
  }
  if (auto chol = Cholesky::factor(a, retry)) return {chol->solve(b), retry};

  std::ostringstream os;
  os << "factorization failed at ridge " << ridge << " and retry " << retry;
  throw Error(ErrorCode::kSingularAfterRidge, os.str());
}

DenseVector solve_spd(const DenseMatrix& a, std::span<const double> b, double ridge) {
  return solve_spd_detailed(a, b, ridge).x;
}

DenseVector woodbury_solve(const DenseMatrix& j, std::span<const double> rhs, double ridge) {
  if (!(ridge > 0.0)) throw Error(ErrorCode::kInvalidArgument, "woodbury_solve needs ridge > 0");
  require_same_size(j.rows(), rhs.size(), "woodbury rhs");
  const DenseVector alpha = solve_spd(gram(j), rhs, ridge);
  return matvec_transposed(j, alpha);
}

DenseVector smw_solve(const DenseMatrix& u, std::span<const double> v, double ridge) {
  if (!(ridge > 0.0)) throw Error(ErrorCode::kInvalidArgument, "smw_solve needs ridge > 0");
  require_same_size(u.cols(), v.size(), "smw rhs");
  DenseVector out(v);
  if (u.rows() > 0) {
    const DenseVector uv = matvec(u, v);
    const DenseVector low_rank = woodbury_solve(u, uv, ridge);
    axpy(-1.0, low_rank, out);
  }
  for (double& x : out) x /= ridge;
  return out;
}

std::vector<double> symmetric_eigenvalues(const DenseMatrix& input) {
  if (!input.is_square()) throw Error(ErrorCode::kNotSquare, "symmetric_eigenvalues");
  DenseMatrix a = input;
  const std::size_t n = a.rows();
  double frob = 0.0;
  for (double v : a.flat()) frob += v * v;
  frob = std::sqrt(frob);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-15 * frob || off == 0.0) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

double spd_condition(const DenseMatrix& a) {
  const auto eig = symmetric_eigenvalues(a);
  if (eig.empty()) return 1.0;
  if (eig.front() <= 0.0) return std::numeric_limits<double>::infinity();
  return eig.back() / eig.front();
}

}  // namespace natgrad
