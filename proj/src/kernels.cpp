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

#include "natgrad/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cstdint>

#include <omp.h>

namespace natgrad::kernels {

namespace serial {

void gram(ConstMatrixView a, std::span<double> out) {
  assert(out.size() == a.rows * a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ri = a.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const double* rj = a.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += ri[k] * rj[k];
      out[i * a.rows + j] = acc;
      out[j * a.rows + i] = acc;
    }
  }
}

void cross_product(ConstMatrixView a, std::span<double> out) {
  assert(out.size() == a.cols * a.cols);
  const std::size_t p = a.cols;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t n = 0; n < a.rows; ++n) {
    const double* r = a.row(n);
    for (std::size_t i = 0; i < p; ++i) {
      const double ri = r[i];
      if (ri == 0.0) continue;
      double* oi = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) oi[j] += ri * r[j];
    }
  }
}

void matvec(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == a.cols && y.size() == a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* r = a.row(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) acc += r[k] * x[k];
    y[i] = acc;
  }
}

void matvec_transposed(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == a.rows && y.size() == a.cols);
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t n = 0; n < a.rows; ++n) {
    const double* r = a.row(n);
    const double xn = x[n];
    for (std::size_t k = 0; k < a.cols; ++k) y[k] += r[k] * xn;
  }
}

}  // namespace serial

namespace parallel {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1 << 14;

bool worth_it(std::size_t work) { return work >= kMinParallelWork && omp_get_max_threads() > 1; }

}  // namespace

void gram(ConstMatrixView a, std::span<double> out) {
  assert(out.size() == a.rows * a.rows);
  const auto n = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(dynamic, 1) if (worth_it(a.rows * a.rows * a.cols / 2))
  for (std::int64_t i = 0; i < n; ++i) {
    const double* ri = a.row(static_cast<std::size_t>(i));
    for (std::int64_t j = 0; j <= i; ++j) {
      const double* rj = a.row(static_cast<std::size_t>(j));
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += ri[k] * rj[k];
      out[static_cast<std::size_t>(i * n + j)] = acc;
      out[static_cast<std::size_t>(j * n + i)] = acc;
    }
  }
}

void cross_product(ConstMatrixView a, std::span<double> out) {
  assert(out.size() == a.cols * a.cols);
  const auto p = static_cast<std::int64_t>(a.cols);
  // Each thread owns whole output rows; within a row the sum over samples runs
  // in the same ascending order as the serial kernel.
#pragma omp parallel for schedule(static) if (worth_it(a.rows * a.cols * a.cols))
  for (std::int64_t i = 0; i < p; ++i) {
    double* oi = out.data() + i * p;
    std::fill(oi, oi + p, 0.0);
    for (std::size_t n = 0; n < a.rows; ++n) {
      const double* r = a.row(n);
      const double ri = r[i];
      if (ri == 0.0) continue;
      for (std::int64_t j = 0; j < p; ++j) oi[j] += ri * r[j];
    }
  }
}

void matvec(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == a.cols && y.size() == a.rows);
  const auto rows = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static) if (worth_it(a.rows * a.cols))
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* r = a.row(static_cast<std::size_t>(i));
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) acc += r[k] * x[k];
    y[static_cast<std::size_t>(i)] = acc;
  }
}

void matvec_transposed(ConstMatrixView a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == a.rows && y.size() == a.cols);
  // Column blocks per thread, samples in ascending order inside each block.
  constexpr std::int64_t kBlock = 256;
  const auto cols = static_cast<std::int64_t>(a.cols);
  const std::int64_t blocks = (cols + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (worth_it(a.rows * a.cols))
  for (std::int64_t b = 0; b < blocks; ++b) {
    const std::int64_t lo = b * kBlock;
    const std::int64_t hi = std::min(cols, lo + kBlock);
    for (std::int64_t k = lo; k < hi; ++k) y[static_cast<std::size_t>(k)] = 0.0;
    for (std::size_t n = 0; n < a.rows; ++n) {
      const double* r = a.row(n);
      const double xn = x[n];
      for (std::int64_t k = lo; k < hi; ++k) y[static_cast<std::size_t>(k)] += r[k] * xn;
    }
  }
}

}  // namespace parallel

void set_num_threads(int threads) {
  if (threads >= 1) omp_set_num_threads(threads);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace natgrad::kernels
