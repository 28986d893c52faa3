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

#include "natgrad/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "natgrad/error.hpp"

namespace natgrad {

std::string_view to_string(CurvatureKind kind) {
  switch (kind) {
    case CurvatureKind::kFisher: return "fisher";
    case CurvatureKind::kEf: return "ef";
    case CurvatureKind::kIef: return "ief";
    case CurvatureKind::kGn: return "gn";
    case CurvatureKind::kSf1: return "sf1";
  }
  return "unknown";
}

std::string_view to_string(KfacVariant variant) {
  switch (variant) {
    case KfacVariant::kKfac: return "kfac";
    case KfacVariant::kEkfac: return "ekfac";
    case KfacVariant::kIekfac: return "iekfac";
  }
  return "unknown";
}

namespace {

void require_explicit_size(std::size_t p) {
  if (p > kMaxExplicitParameters)
    throw Error(ErrorCode::kTooLarge, std::to_string(p) + " parameters is too many for an explicit matrix");
}

// Stacks `per_sample` weighted output-space directions per sample, pulls each
// back through the network and returns Σ rowᵀrow. The weight callback fills
// the dz vectors for one sample given its logits.
template <typename Fill>
DenseMatrix pulled_back_outer_products(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                       std::size_t per_sample, Fill fill) {
  check_shapes(spec, theta, batch);
  require_explicit_size(theta.size());
  const Network net(spec, theta.span());
  const std::size_t n_samples = batch.size();
  DenseMatrix rows(n_samples * per_sample, theta.size());
  const auto n_total = static_cast<std::int64_t>(n_samples);
#pragma omp parallel
  {
    Network::Trace trace;
    std::vector<std::vector<double>> dz(per_sample);
#pragma omp for schedule(static)
    for (std::int64_t ni = 0; ni < n_total; ++ni) {
      const auto n = static_cast<std::size_t>(ni);
      net.forward(batch.inputs.row(n), trace);
      fill(n, trace.logits(), dz);
      for (std::size_t k = 0; k < per_sample; ++k) net.backward(trace, dz[k], rows.row(n * per_sample + k));
    }
  }
  return cross_product(rows);
}

}  // namespace

CurvatureMatrix build_fisher(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  CurvatureMatrix out{CurvatureKind::kFisher, {}, "fisher"};
  switch (spec.kind) {
    case ModelKind::kMlpSoftmaxCe:
    case ModelKind::kLogisticBinary: {
      const std::size_t classes = spec.classes;
      out.matrix = pulled_back_outer_products(
          spec, theta, batch, classes,
          [&](std::size_t, std::span<const double> z, std::vector<std::vector<double>>& dz) {
            const HeadEval head = evaluate_head(spec, z, 0, 0.0);
            for (std::size_t c = 0; c < classes; ++c) {
              // √p(c) · ∂(−log p(c))/∂z
              const double w = std::sqrt(head.probs[c]);
              if (spec.kind == ModelKind::kLogisticBinary) {
                dz[c] = {w * (head.probs[1] - static_cast<double>(c))};
              } else {
                dz[c] = head.probs;
                dz[c][c] -= 1.0;
                for (double& v : dz[c]) v *= w;
              }
            }
          });
      break;
    }
    case ModelKind::kLinearLeastSquares:
      out.matrix = build_gn(spec, theta, batch).matrix;
      break;
  }
  return out;
}

CurvatureMatrix build_gn(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  const std::size_t outputs = spec.num_outputs();
  DenseMatrix m = pulled_back_outer_products(
      spec, theta, batch, outputs,
      [&](std::size_t, std::span<const double>, std::vector<std::vector<double>>& dz) {
        for (std::size_t k = 0; k < outputs; ++k) {
          dz[k].assign(outputs, 0.0);
          dz[k][k] = 1.0;
        }
      });
  return {CurvatureKind::kGn, std::move(m), "gn"};
}

CurvatureMatrix build_ef(const BatchLinearization& lin) {
  require_explicit_size(lin.num_parameters());
  return {CurvatureKind::kEf, cross_product(lin.jacobian), "ef"};
}

namespace {

DenseMatrix rescaled_rows(const BatchLinearization& lin) {
  DenseMatrix scaled = lin.jacobian;
  for (std::size_t n = 0; n < lin.batch_size(); ++n) {
    const double s = lin.sief[n];
    if (!(s > 0.0)) throw Error(ErrorCode::kZeroScale, "s_" + std::to_string(n) + " is zero");
    const double inv = 1.0 / std::sqrt(s);
    for (double& v : scaled.row(n)) v *= inv;
  }
  return scaled;
}

}  // namespace

CurvatureMatrix build_ief(const BatchLinearization& lin) {
  require_explicit_size(lin.num_parameters());
  return {CurvatureKind::kIef, cross_product(rescaled_rows(lin)), "ief"};
}

CurvatureMatrix build_sf(const DenseMatrix& sampled_jacobian) {
  require_explicit_size(sampled_jacobian.cols());
  return {CurvatureKind::kSf1, cross_product(sampled_jacobian), "sf1"};
}

CurvatureMatrix woodfisher_recursion(const BatchLinearization& lin, WoodFisherVariant variant,
                                     std::span<const std::size_t> order) {
  require_explicit_size(lin.num_parameters());
  const std::size_t n = lin.batch_size();
  std::vector<std::size_t> idx(order.begin(), order.end());
  if (idx.empty()) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
  }
  std::vector<std::size_t> check = idx;
  std::sort(check.begin(), check.end());
  for (std::size_t i = 0; i < check.size(); ++i)
    if (check.size() != n || check[i] != i) throw Error(ErrorCode::kInvalidArgument, "order is not a permutation");

  const DenseMatrix rows = variant == WoodFisherVariant::kIef ? rescaled_rows(lin) : lin.jacobian;
  const std::size_t p = lin.num_parameters();
  const double inv_n = 1.0 / static_cast<double>(n);
  DenseMatrix f(p, p);
  for (std::size_t k : idx) {
    const auto g = rows.row(k);
    for (std::size_t i = 0; i < p; ++i) {
      const double gi = inv_n * g[i];
      if (gi == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) f(i, j) += gi * g[j];
    }
  }
  return {variant == WoodFisherVariant::kIef ? CurvatureKind::kIef : CurvatureKind::kEf, std::move(f),
          "woodfisher"};
}

KroneckerFactorPair build_kfac_factors(const DenseMatrix& inputs, const DenseMatrix& output_grads,
                                       std::span<const double> sief, KfacVariant variant, std::size_t layer) {
  const std::size_t n = inputs.rows();
  if (output_grads.rows() != n) throw Error(ErrorCode::kShapeMismatch, "inputs and gradients disagree on N");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no samples");
  const double inv_n = 1.0 / static_cast<double>(n);

  KroneckerFactorPair pair;
  pair.layer = layer;
  pair.variant = variant;
  pair.a = inv_n * cross_product(inputs);
  if (variant == KfacVariant::kIekfac) {
    if (sief.size() != n) throw Error(ErrorCode::kShapeMismatch, "scaling vector length");
    DenseMatrix scaled = output_grads;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(sief[i] > 0.0)) throw Error(ErrorCode::kZeroScale, "s_" + std::to_string(i) + " is zero");
      const double inv = 1.0 / std::sqrt(sief[i]);
      for (double& v : scaled.row(i)) v *= inv;
    }
    pair.g = inv_n * cross_product(scaled);
  } else {
    pair.g = inv_n * cross_product(output_grads);
  }
  return pair;
}

bool satisfies_curvature_invariants(const CurvatureMatrix& c) {
  if (!is_symmetric(c.matrix, 1e-10)) return false;
  const auto eig = symmetric_eigenvalues(c.matrix);
  if (eig.empty()) return true;
  const double top = std::max(eig.back(), 0.0);
  return eig.front() >= -1e-8 * top;
}

}  // namespace natgrad
