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

// Explicit curvature matrices for tiny models plus the rank-one recursions and
// Kronecker factors built from per-sample gradients.
//
// Vectorisation convention: vec(W) stacks the rows of a layer's weight block,
// so a fully connected layer's curvature block is G ⊗ A, with A over the
// bias-augmented layer inputs and G over the pre-activation gradients.

#include <cstddef>
#include <span>
#include <string>

#include "natgrad/linalg.hpp"
#include "natgrad/models.hpp"

namespace natgrad {

enum class CurvatureKind { kFisher, kEf, kIef, kGn, kSf1 };
std::string_view to_string(CurvatureKind kind);

struct CurvatureMatrix {
  CurvatureKind kind = CurvatureKind::kFisher;
  DenseMatrix matrix;
  std::string source;
};

inline constexpr std::size_t kMaxExplicitParameters = 3000;

/// Σ_n Σ_c p_n(c) ∇θ log p_n(c) ∇θ log p_n(c)ᵀ, one backward pass per class.
/// Least-squares models use the unit-variance Gaussian likelihood.
CurvatureMatrix build_fisher(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch);
/// Σ_n ∇θz_nᵀ ∇θz_n.
CurvatureMatrix build_gn(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch);
/// Jᵀ J
CurvatureMatrix build_ef(const BatchLinearization& lin);
/// Jᵀ diag(s)⁻¹ J; ZeroScale when some s_n = 0.
CurvatureMatrix build_ief(const BatchLinearization& lin);
/// Ĵᵀ Ĵ from sampled-label gradients.
CurvatureMatrix build_sf(const DenseMatrix& sampled_jacobian);

enum class WoodFisherVariant { kEf, kIef };

/// F_{n+1} = F_n + (1/N) ĝ_n ĝ_nᵀ accumulated in `order` (identity when empty).
CurvatureMatrix woodfisher_recursion(const BatchLinearization& lin, WoodFisherVariant variant,
                                     std::span<const std::size_t> order = {});

enum class KfacVariant { kKfac, kEkfac, kIekfac };
std::string_view to_string(KfacVariant variant);

struct KroneckerFactorPair {
  std::size_t layer = 0;
  DenseMatrix a;  // (fan_in+1) × (fan_in+1)
  DenseMatrix g;  // fan_out × fan_out
  KfacVariant variant = KfacVariant::kEkfac;

  DenseMatrix block() const { return kron(g, a); }
};

/// A = (1/N) aᵀa; G = (1/N) gᵀg, or (1/N) gᵀ diag(s)⁻¹ g for ieKFAC. For kfac
/// the caller passes gradients taken at sampled labels.
KroneckerFactorPair build_kfac_factors(const DenseMatrix& inputs, const DenseMatrix& output_grads,
                                       std::span<const double> sief, KfacVariant variant, std::size_t layer = 0);

/// Symmetric to 1e-10 and min eigenvalue ≥ −1e-8·max eigenvalue.
bool satisfies_curvature_invariants(const CurvatureMatrix& c);

}  // namespace natgrad
