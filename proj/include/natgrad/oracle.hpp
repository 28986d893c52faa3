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

// Dense reference solves in extended precision (long double), used by the
// self-test to check the low-rank solvers where a double-precision dense
// solve would itself lose the digits being compared.

#include <span>

#include "natgrad/linalg.hpp"

namespace natgrad::oracle {

/// (A + ridge·I)⁻¹ b by Gaussian elimination with partial pivoting.
DenseVector solve(const DenseMatrix& a, std::span<const double> b, double ridge = 0.0);

/// (JᵀJ + ridge·I)⁻¹ Jᵀ r with JᵀJ accumulated in extended precision.
DenseVector ridge_solve(const DenseMatrix& j, std::span<const double> r, double ridge);

/// (UᵀU + ridge·I)⁻¹ v.
DenseVector gram_inverse_apply(const DenseMatrix& u, std::span<const double> v, double ridge);

/// Relative 2-norm error ‖x − ref‖ / ‖ref‖ (absolute when ref = 0).
double relative_error(std::span<const double> x, std::span<const double> ref);

}  // namespace natgrad::oracle
