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

// Desk-scale differentiable models: a fully connected network with one of
// three output heads (softmax + cross-entropy, scalar least squares, binary
// logistic). Each layer l owns a row-major weight block of shape
// width[l+1] × (width[l] + 1) whose column 0 is the bias, so the parameters of
// the one-feature linear model are (bias, slope).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "natgrad/linalg.hpp"

namespace natgrad {

enum class ModelKind { kMlpSoftmaxCe, kLinearLeastSquares, kLogisticBinary };
enum class Activation { kRelu, kIdentity };

std::string_view to_string(ModelKind kind);
std::string_view to_string(Activation act);
ModelKind parse_model_kind(std::string_view text);
Activation parse_activation(std::string_view text);

struct ModelSpec {
  ModelKind kind = ModelKind::kMlpSoftmaxCe;
  // Input dimension first, output width last.
  std::vector<std::size_t> widths;
  Activation activation = Activation::kRelu;
  // Class count C: ≥ 2 for softmax, 2 for logistic (one logit), 1 for least squares.
  std::size_t classes = 0;

  static ModelSpec mlp(std::size_t input, std::vector<std::size_t> hidden, std::size_t classes,
                       Activation act = Activation::kRelu);
  static ModelSpec least_squares(std::size_t input, std::vector<std::size_t> hidden = {},
                                 Activation act = Activation::kRelu);
  static ModelSpec logistic(std::size_t input, std::vector<std::size_t> hidden = {},
                            Activation act = Activation::kRelu);

  void validate() const;
  bool is_classification() const { return kind != ModelKind::kLinearLeastSquares; }
  std::size_t input_dim() const { return widths.front(); }
  std::size_t num_outputs() const { return widths.back(); }
  std::size_t num_layers() const { return widths.size() - 1; }
  std::size_t num_parameters() const;

  // Canonical one-line description; hashed into checkpoint headers.
  std::string describe() const;
  std::uint64_t hash() const;

  bool operator==(const ModelSpec&) const = default;
};

struct LayerSlice {
  std::size_t offset = 0;
  std::size_t rows = 0;  // fan-out
  std::size_t cols = 0;  // fan-in + 1 (bias column first)
};

std::vector<LayerSlice> parameter_layout(const ModelSpec& spec);

class ParameterVector {
 public:
  ParameterVector() = default;
  static ParameterVector zeros(const ModelSpec& spec);
  static ParameterVector from_values(const ModelSpec& spec, DenseVector values);

  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  const DenseVector& values() const { return values_; }
  DenseVector& values() { return values_; }
  std::span<const double> span() const { return values_.span(); }
  const std::vector<LayerSlice>& layout() const { return layout_; }

 private:
  DenseVector values_;
  std::vector<LayerSlice> layout_;
};

/// Glorot-uniform weights, zero biases, from a seeded generator.
ParameterVector init_parameters(const ModelSpec& spec, std::uint64_t seed);

struct Batch {
  DenseMatrix inputs;           // N × d
  std::vector<int> labels;      // classification kinds
  std::vector<double> targets;  // least squares

  std::size_t size() const { return inputs.rows(); }
  Batch subset(std::span<const std::size_t> indices) const;
};

struct ForwardResult {
  DenseMatrix logits;  // N × outputs
  DenseVector losses;  // N
  DenseMatrix probs;   // N × C, classification only
};

struct BatchLinearization {
  DenseVector losses;      // l_n
  DenseMatrix jacobian;    // N × P, row n = ∇θ l_n
  DenseVector sief;        // s_n = ‖∇z l_n‖²
  DenseVector total_grad;  // Jᵀ 1
  DenseMatrix probs;
  DenseMatrix logits;

  std::size_t batch_size() const { return jacobian.rows(); }
  std::size_t num_parameters() const { return jacobian.cols(); }
};

/// Loss, output-gradient and (for classification) class probabilities of one
/// sample given its logits.
struct HeadEval {
  double loss = 0.0;
  std::vector<double> dz;
  std::vector<double> probs;
};
HeadEval evaluate_head(const ModelSpec& spec, std::span<const double> z, int label, double target);

/// Loss Hessian with respect to the logits (the middle factor of the GGN).
DenseMatrix output_hessian(const ModelSpec& spec, std::span<const double> z);

/// Per-sample forward/backward passes over the fixed feed-forward graph.
class Network {
 public:
  Network(const ModelSpec& spec, std::span<const double> params);

  struct Trace {
    std::vector<std::vector<double>> activations;  // a_l fed into layer l (no bias entry)
    std::vector<std::vector<double>> preacts;      // h_l = W_l [1; a_l]
    std::span<const double> logits() const { return preacts.back(); }
  };

  void forward(std::span<const double> x, Trace& trace) const;
  /// grad (length P) = (∂z/∂θ)ᵀ dz for the sample held in trace.
  void backward(const Trace& trace, std::span<const double> dz, std::span<double> grad) const;
  /// deltas[l] = ∂(dzᵀz)/∂h_l.
  void backward_deltas(const Trace& trace, std::span<const double> dz,
                       std::vector<std::vector<double>>& deltas) const;
  /// Forward-mode directional derivative (∂z/∂θ) v.
  std::vector<double> jvp(const Trace& trace, std::span<const double> v) const;

  const ModelSpec& spec() const { return spec_; }

 private:
  double act(double h) const;
  double act_grad(double h) const;

  ModelSpec spec_;
  std::span<const double> params_;
  std::vector<LayerSlice> layout_;
};

void check_shapes(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch);

ForwardResult forward(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch);
BatchLinearization batch_linearize(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch);

/// F v with F = Σ_n (∂z_n/∂θ)ᵀ ∇²_z l_n (∂z_n/∂θ).
DenseVector fisher_vector_product(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                  std::span<const double> v);

struct PseudoGradients {
  std::vector<int> sampled_labels;
  DenseMatrix jacobian;  // row n = ∇θ(−log p_n(ŷ_n))
};

/// Draws ŷ_n ~ p_n from a generator seeded with `seed` and returns the
/// per-sample gradients at the drawn labels.
PseudoGradients sample_pseudo_gradients(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                        std::uint64_t seed);

/// Augmented layer inputs [1, a] (N × (fan_in+1)) and loss gradients with
/// respect to the layer pre-activations (N × fan_out), per sample.
struct LayerStatistics {
  DenseMatrix inputs;
  DenseMatrix output_grads;
};
LayerStatistics layer_statistics(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                 std::size_t layer);

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(std::uint64_t bits);

}  // namespace natgrad
