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

// Candidate parameter updates. Every routine returns the raw preconditioned
// direction; an optimiser applies θ ← θ − η·direction.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "natgrad/linalg.hpp"
#include "natgrad/models.hpp"

namespace natgrad {

enum class UpdateMethod { kSgd, kEf, kIef, kSf, kNgdExact, kNgdCg };

std::string_view to_string(UpdateMethod method);
UpdateMethod parse_update_method(std::string_view text);

/// Damping λ. A relative damping is multiplied by the batch trace scale
/// trace(J Jᵀ)/N of the empirical Jacobian before use.
struct Damping {
  double value = 1e-12;
  bool relative = true;

  static Damping absolute(double v) { return {v, false}; }
  static Damping trace_relative(double v) { return {v, true}; }
  double resolve(const BatchLinearization& lin) const;
};

/// trace(J Jᵀ)/N, the mean squared per-sample gradient norm.
double trace_scale(const BatchLinearization& lin);

struct UpdateRequest {
  UpdateMethod method = UpdateMethod::kSgd;
  Damping damping;
  std::size_t cg_iters = 0;  // ngd-cg only
  std::uint64_t seed = 0;    // sf only
};

struct UpdateVector {
  DenseVector direction;
  UpdateMethod method = UpdateMethod::kSgd;
  double damping = 0.0;
  // Per-sample gradients below kZeroGradientNorm are removed before the
  // EF/iEF solves; their count is kept here as a warning.
  std::size_t dropped_rows = 0;
};

inline constexpr double kZeroGradientNorm = 1e-12;

using FisherOperator = std::function<DenseVector(std::span<const double>)>;

UpdateVector sgd_update(const BatchLinearization& lin);
/// Jᵀ (J Jᵀ + λI)⁻¹ 1
UpdateVector ef_update(const BatchLinearization& lin, double lambda);
/// Jᵀ (J Jᵀ + λI)⁻¹ s
UpdateVector ief_update(const BatchLinearization& lin, double lambda);
/// (Ĵᵀ Ĵ + λI)⁻¹ g through the sample-space identity.
UpdateVector sf_update(const BatchLinearization& lin, const DenseMatrix& sampled_jacobian, double lambda);
/// (F + λI)⁻¹ g with an explicit Fisher.
UpdateVector ngd_exact_update(const DenseMatrix& fisher, std::span<const double> grad, double lambda);

struct CgResult {
  UpdateVector update;
  std::vector<double> gamma_trace;  // γ of x_1 … x_m
  std::size_t iterations = 0;
  bool breakdown = false;           // rᵀr or vᵀAv fell below 1e-300
};

/// Unpreconditioned linear CG on (F + λI) x = g from x₀ = 0. The γ trace is
/// measured with the undamped operator.
CgResult ngd_cg_update(const FisherOperator& fvp, std::span<const double> grad, std::size_t cg_iters, double lambda);

/// κ_n = Δθᵀ∇θl_n / ‖∇θl_n‖. Rows with a vanishing gradient are flagged and
/// carry NaN.
struct ProjectionProfile {
  DenseVector kappa;
  std::vector<bool> flagged;
};
ProjectionProfile projection_profile(const BatchLinearization& lin, std::span<const double> dtheta);

/// Dispatches a request against one batch. ngd-exact builds the explicit
/// Fisher; ngd-cg uses the model's Fisher-vector product.
UpdateVector generate_update(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                             const BatchLinearization& lin, const UpdateRequest& request);

}  // namespace natgrad
