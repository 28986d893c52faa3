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

// Dense row-major kernels that dominate the exact EF/iEF/SF solves: the
// sample-space Gram matrix J Jᵀ, the parameter-space cross product Jᵀ J and
// the two matrix-vector products.
//
// Every kernel exists twice. `serial` is the reference implementation used by
// the tests; `parallel` splits the output across OpenMP threads but keeps the
// summation order of each output element identical to `serial`, so the two
// agree bit for bit.

#include <cstddef>
#include <span>

namespace natgrad::kernels {

struct ConstMatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  const double* row(std::size_t i) const { return data + i * cols; }
};

namespace serial {

// out (rows × rows) = A Aᵀ
void gram(ConstMatrixView a, std::span<double> out);
// out (cols × cols) = Aᵀ A
void cross_product(ConstMatrixView a, std::span<double> out);
// y (rows) = A x
void matvec(ConstMatrixView a, std::span<const double> x, std::span<double> y);
// y (cols) = Aᵀ x
void matvec_transposed(ConstMatrixView a, std::span<const double> x, std::span<double> y);

}  // namespace serial

namespace parallel {

void gram(ConstMatrixView a, std::span<double> out);
void cross_product(ConstMatrixView a, std::span<double> out);
void matvec(ConstMatrixView a, std::span<const double> x, std::span<double> y);
void matvec_transposed(ConstMatrixView a, std::span<const double> x, std::span<double> y);

}  // namespace parallel

// Sets the OpenMP team size used by the parallel kernels and the per-sample
// loops in the model code. Values < 1 leave the runtime default untouched.
void set_num_threads(int threads);
int num_threads();

}  // namespace natgrad::kernels
