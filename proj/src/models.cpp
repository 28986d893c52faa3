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

#include "natgrad/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "natgrad/error.hpp"

namespace natgrad {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMlpSoftmaxCe: return "mlp-softmax-ce";
    case ModelKind::kLinearLeastSquares: return "linear-least-squares";
    case ModelKind::kLogisticBinary: return "logistic-binary";
  }
  return "unknown";
}

std::string_view to_string(Activation act) { return act == Activation::kRelu ? "relu" : "identity"; }

ModelKind parse_model_kind(std::string_view text) {
  for (auto k : {ModelKind::kMlpSoftmaxCe, ModelKind::kLinearLeastSquares, ModelKind::kLogisticBinary})
    if (to_string(k) == text) return k;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind '" + std::string(text) + "'");
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "identity") return Activation::kIdentity;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + std::string(text) + "'");
}

namespace {

std::vector<std::size_t> join_widths(std::size_t input, const std::vector<std::size_t>& hidden,
                                     std::size_t output) {
  std::vector<std::size_t> w{input};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output);
  return w;
}

}  // namespace

ModelSpec ModelSpec::mlp(std::size_t input, std::vector<std::size_t> hidden, std::size_t classes,
                         Activation act) {
  ModelSpec s{ModelKind::kMlpSoftmaxCe, join_widths(input, hidden, classes), act, classes};
  s.validate();
  return s;
}

ModelSpec ModelSpec::least_squares(std::size_t input, std::vector<std::size_t> hidden, Activation act) {
  ModelSpec s{ModelKind::kLinearLeastSquares, join_widths(input, hidden, 1), act, 1};
  s.validate();
  return s;
}

ModelSpec ModelSpec::logistic(std::size_t input, std::vector<std::size_t> hidden, Activation act) {
  ModelSpec s{ModelKind::kLogisticBinary, join_widths(input, hidden, 1), act, 2};
  s.validate();
  return s;
}

void ModelSpec::validate() const {
  if (widths.size() < 2) throw Error(ErrorCode::kInvalidArgument, "model needs at least input and output widths");
  for (auto w : widths)
    if (w == 0) throw Error(ErrorCode::kInvalidArgument, "layer widths must be positive");
  switch (kind) {
    case ModelKind::kMlpSoftmaxCe:
      if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "softmax model needs C >= 2");
      if (widths.back() != classes) throw Error(ErrorCode::kInvalidArgument, "output width must equal C");
      break;
    case ModelKind::kLinearLeastSquares:
      if (widths.back() != 1 || classes != 1)
        throw Error(ErrorCode::kInvalidArgument, "least-squares model has a single output");
      break;
    case ModelKind::kLogisticBinary:
      if (widths.back() != 1 || classes != 2)
        throw Error(ErrorCode::kInvalidArgument, "logistic model has one logit and two classes");
      break;
  }
}

std::size_t ModelSpec::num_parameters() const {
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) p += widths[l + 1] * (widths[l] + 1);
  return p;
}

std::string ModelSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind) << ";widths=";
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << ";activation=" << to_string(activation) << ";classes=" << classes;
  return os.str();
}

std::uint64_t ModelSpec::hash() const {
  // FNV-1a over the canonical description.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : describe()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<LayerSlice> parameter_layout(const ModelSpec& spec) {
  std::vector<LayerSlice> layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    LayerSlice s{offset, spec.widths[l + 1], spec.widths[l] + 1};
    offset += s.rows * s.cols;
    layout.push_back(s);
  }
  return layout;
}

ParameterVector ParameterVector::zeros(const ModelSpec& spec) {
  return from_values(spec, DenseVector(spec.num_parameters()));
}

ParameterVector ParameterVector::from_values(const ModelSpec& spec, DenseVector values) {
  if (values.size() != spec.num_parameters()) {
    std::ostringstream os;
    os << "parameter count " << values.size() << " vs model " << spec.num_parameters();
    throw Error(ErrorCode::kShapeMismatch, os.str());
  }
  ParameterVector p;
  p.values_ = std::move(values);
  p.layout_ = parameter_layout(spec);
  return p;
}

double uniform01(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

ParameterVector init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParameterVector theta = ParameterVector::zeros(spec);
  std::mt19937_64 gen(seed);
  for (const auto& slice : theta.layout()) {
    const double fan_in = static_cast<double>(slice.cols - 1);
    const double fan_out = static_cast<double>(slice.rows);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < slice.rows; ++i)
      for (std::size_t j = 1; j < slice.cols; ++j)
        theta[slice.offset + i * slice.cols + j] = limit * (2.0 * uniform01(gen()) - 1.0);
  }
  return theta;
}

Batch Batch::subset(std::span<const std::size_t> indices) const {
  Batch b;
  b.inputs = DenseMatrix(indices.size(), inputs.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), b.inputs.row(i).begin());
    if (!labels.empty()) b.labels.push_back(labels[indices[i]]);
    if (!targets.empty()) b.targets.push_back(targets[indices[i]]);
  }
  return b;
}

HeadEval evaluate_head(const ModelSpec& spec, std::span<const double> z, int label, double target) {
  HeadEval out;
  switch (spec.kind) {
    case ModelKind::kMlpSoftmaxCe: {
      const double zmax = *std::max_element(z.begin(), z.end());
      double denom = 0.0;
      out.probs.resize(z.size());
      for (std::size_t c = 0; c < z.size(); ++c) {
        out.probs[c] = std::exp(z[c] - zmax);
        denom += out.probs[c];
      }
      for (double& p : out.probs) p /= denom;
      const auto y = static_cast<std::size_t>(label);
      out.loss = (zmax + std::log(denom)) - z[y];
      out.dz = out.probs;
      out.dz[y] -= 1.0;
      break;
    }
    case ModelKind::kLinearLeastSquares: {
      const double r = z[0] - target;
      out.loss = 0.5 * r * r;
      out.dz = {r};
      break;
    }
    case ModelKind::kLogisticBinary: {
      const double x = z[0];
      const double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      const double y = static_cast<double>(label);
      // softplus(x) − y·x, evaluated without overflow.
      out.loss = std::max(x, 0.0) - y * x + std::log1p(std::exp(-std::abs(x)));
      out.probs = {1.0 - p, p};
      out.dz = {p - y};
      break;
    }
  }
  return out;
}

DenseMatrix output_hessian(const ModelSpec& spec, std::span<const double> z) {
  switch (spec.kind) {
    case ModelKind::kMlpSoftmaxCe: {
      const auto head = evaluate_head(spec, z, 0, 0.0);
      const auto& p = head.probs;
      DenseMatrix h(p.size(), p.size());
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j) h(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
      return h;
    }
    case ModelKind::kLinearLeastSquares:
      return DenseMatrix{{1.0}};
    case ModelKind::kLogisticBinary: {
      const auto head = evaluate_head(spec, z, 0, 0.0);
      return DenseMatrix{{head.probs[0] * head.probs[1]}};
    }
  }
  return {};
}

Network::Network(const ModelSpec& spec, std::span<const double> params)
    : spec_(spec), params_(params), layout_(parameter_layout(spec)) {
  if (params.size() != spec.num_parameters())
    throw Error(ErrorCode::kShapeMismatch, "parameter vector does not match model");
}

double Network::act(double h) const {
  return spec_.activation == Activation::kRelu ? (h > 0.0 ? h : 0.0) : h;
}

// ReLU subgradient at exactly 0 is 0.
double Network::act_grad(double h) const {
  return spec_.activation == Activation::kRelu ? (h > 0.0 ? 1.0 : 0.0) : 1.0;
}

void Network::forward(std::span<const double> x, Trace& trace) const {
  const std::size_t layers = layout_.size();
  trace.activations.resize(layers);
  trace.preacts.resize(layers);
  trace.activations[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerSlice& s = layout_[l];
    const auto& a = trace.activations[l];
    auto& h = trace.preacts[l];
    h.assign(s.rows, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i) {
      const double* w = params_.data() + s.offset + i * s.cols;
      double acc = w[0];
      for (std::size_t j = 1; j < s.cols; ++j) acc += w[j] * a[j - 1];
      h[i] = acc;
    }
    if (l + 1 < layers) {
      auto& next = trace.activations[l + 1];
      next.resize(s.rows);
      for (std::size_t i = 0; i < s.rows; ++i) next[i] = act(h[i]);
    }
  }
}

void Network::backward_deltas(const Trace& trace, std::span<const double> dz,
                              std::vector<std::vector<double>>& deltas) const {
  const std::size_t layers = layout_.size();
  deltas.resize(layers);
  deltas[layers - 1].assign(dz.begin(), dz.end());
  for (std::size_t l = layers - 1; l > 0; --l) {
    const LayerSlice& s = layout_[l];
    const auto& delta = deltas[l];
    auto& prev = deltas[l - 1];
    prev.assign(s.cols - 1, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i) {
      const double di = delta[i];
      if (di == 0.0) continue;
      const double* w = params_.data() + s.offset + i * s.cols;
      for (std::size_t j = 1; j < s.cols; ++j) prev[j - 1] += w[j] * di;
    }
    const auto& h = trace.preacts[l - 1];
    for (std::size_t j = 0; j < prev.size(); ++j) prev[j] *= act_grad(h[j]);
  }
}

void Network::backward(const Trace& trace, std::span<const double> dz, std::span<double> grad) const {
  std::vector<std::vector<double>> deltas;
  backward_deltas(trace, dz, deltas);
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    const LayerSlice& s = layout_[l];
    const auto& a = trace.activations[l];
    const auto& d = deltas[l];
    for (std::size_t i = 0; i < s.rows; ++i) {
      double* g = grad.data() + s.offset + i * s.cols;
      g[0] = d[i];
      for (std::size_t j = 1; j < s.cols; ++j) g[j] = d[i] * a[j - 1];
    }
  }
}

std::vector<double> Network::jvp(const Trace& trace, std::span<const double> v) const {
  const std::size_t layers = layout_.size();
  std::vector<double> ra(trace.activations[0].size(), 0.0);
  std::vector<double> rh;
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerSlice& s = layout_[l];
    const auto& a = trace.activations[l];
    rh.assign(s.rows, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i) {
      const double* w = params_.data() + s.offset + i * s.cols;
      const double* dw = v.data() + s.offset + i * s.cols;
      double acc = dw[0];
      for (std::size_t j = 1; j < s.cols; ++j) acc += dw[j] * a[j - 1] + w[j] * ra[j - 1];
      rh[i] = acc;
    }
    if (l + 1 < layers) {
      const auto& h = trace.preacts[l];
      ra.resize(s.rows);
      for (std::size_t i = 0; i < s.rows; ++i) ra[i] = act_grad(h[i]) * rh[i];
    }
  }
  return rh;
}

void check_shapes(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  spec.validate();
  std::ostringstream os;
  if (theta.size() != spec.num_parameters()) {
    os << "theta has " << theta.size() << " entries, model needs " << spec.num_parameters();
  } else if (batch.size() == 0) {
    os << "empty batch";
  } else if (batch.inputs.cols() != spec.input_dim()) {
    os << "batch feature dim " << batch.inputs.cols() << " vs model input " << spec.input_dim();
  } else if (spec.is_classification() && batch.labels.size() != batch.size()) {
    os << "classification batch needs one label per sample";
  } else if (!spec.is_classification() && batch.targets.size() != batch.size()) {
    os << "regression batch needs one target per sample";
  }
  if (!os.str().empty()) throw Error(ErrorCode::kShapeMismatch, os.str());
  if (spec.is_classification()) {
    for (int y : batch.labels)
      if (y < 0 || static_cast<std::size_t>(y) >= spec.classes)
        throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
  }
}

namespace {

int label_of(const Batch& b, std::size_t n) { return b.labels.empty() ? 0 : b.labels[n]; }
double target_of(const Batch& b, std::size_t n) { return b.targets.empty() ? 0.0 : b.targets[n]; }

}  // namespace

ForwardResult forward(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  check_shapes(spec, theta, batch);
  const std::size_t n_samples = batch.size();
  const Network net(spec, theta.span());
  ForwardResult out;
  out.logits = DenseMatrix(n_samples, spec.num_outputs());
  out.losses = DenseVector(n_samples);
  if (spec.is_classification()) out.probs = DenseMatrix(n_samples, spec.classes);

  const auto n_total = static_cast<std::int64_t>(n_samples);
#pragma omp parallel
  {
    Network::Trace trace;
#pragma omp for schedule(static)
    for (std::int64_t ni = 0; ni < n_total; ++ni) {
      const auto n = static_cast<std::size_t>(ni);
      net.forward(batch.inputs.row(n), trace);
      const auto z = trace.logits();
      std::copy(z.begin(), z.end(), out.logits.row(n).begin());
      const HeadEval head = evaluate_head(spec, z, label_of(batch, n), target_of(batch, n));
      out.losses[n] = head.loss;
      if (spec.is_classification()) std::copy(head.probs.begin(), head.probs.end(), out.probs.row(n).begin());
    }
  }
  return out;
}

BatchLinearization batch_linearize(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  check_shapes(spec, theta, batch);
  const std::size_t n_samples = batch.size();
  const std::size_t p = theta.size();
  const Network net(spec, theta.span());

  BatchLinearization lin;
  lin.losses = DenseVector(n_samples);
  lin.jacobian = DenseMatrix(n_samples, p);
  lin.sief = DenseVector(n_samples);
  lin.logits = DenseMatrix(n_samples, spec.num_outputs());
  if (spec.is_classification()) lin.probs = DenseMatrix(n_samples, spec.classes);

  const auto n_total = static_cast<std::int64_t>(n_samples);
#pragma omp parallel
  {
    Network::Trace trace;
#pragma omp for schedule(static)
    for (std::int64_t ni = 0; ni < n_total; ++ni) {
      const auto n = static_cast<std::size_t>(ni);
      net.forward(batch.inputs.row(n), trace);
      const auto z = trace.logits();
      std::copy(z.begin(), z.end(), lin.logits.row(n).begin());
      const HeadEval head = evaluate_head(spec, z, label_of(batch, n), target_of(batch, n));
      lin.losses[n] = head.loss;
      double s = 0.0;
      for (double d : head.dz) s += d * d;
      lin.sief[n] = s;
      if (spec.is_classification()) std::copy(head.probs.begin(), head.probs.end(), lin.probs.row(n).begin());
      net.backward(trace, head.dz, lin.jacobian.row(n));
    }
  }
  lin.total_grad = matvec_transposed(lin.jacobian, DenseVector(n_samples, 1.0));
  return lin;
}

DenseVector fisher_vector_product(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                  std::span<const double> v) {
  check_shapes(spec, theta, batch);
  if (v.size() != theta.size()) throw Error(ErrorCode::kShapeMismatch, "fvp vector length");
  const std::size_t n_samples = batch.size();
  const Network net(spec, theta.span());
  // Per-sample contributions land in their own rows and are summed in sample
  // order afterwards, so the result does not depend on the thread count.
  DenseMatrix contrib(n_samples, theta.size());

  const auto n_total = static_cast<std::int64_t>(n_samples);
#pragma omp parallel
  {
    Network::Trace trace;
#pragma omp for schedule(static)
    for (std::int64_t ni = 0; ni < n_total; ++ni) {
      const auto n = static_cast<std::size_t>(ni);
      net.forward(batch.inputs.row(n), trace);
      const auto rz = net.jvp(trace, v);
      std::vector<double> u(rz.size());
      const auto z = trace.logits();
      switch (spec.kind) {
        case ModelKind::kMlpSoftmaxCe: {
          const auto head = evaluate_head(spec, z, 0, 0.0);
          double prz = 0.0;
          for (std::size_t c = 0; c < rz.size(); ++c) prz += head.probs[c] * rz[c];
          for (std::size_t c = 0; c < rz.size(); ++c) u[c] = head.probs[c] * (rz[c] - prz);
          break;
        }
        case ModelKind::kLinearLeastSquares:
          u[0] = rz[0];
          break;
        case ModelKind::kLogisticBinary: {
          const auto head = evaluate_head(spec, z, 0, 0.0);
          u[0] = head.probs[0] * head.probs[1] * rz[0];
          break;
        }
      }
      net.backward(trace, u, contrib.row(n));
    }
  }
  return matvec_transposed(contrib, DenseVector(n_samples, 1.0));
}

PseudoGradients sample_pseudo_gradients(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                        std::uint64_t seed) {
  if (!spec.is_classification())
    throw Error(ErrorCode::kInvalidArgument, "label sampling needs a classification model");
  const ForwardResult fwd = forward(spec, theta, batch);
  std::mt19937_64 gen(seed);
  PseudoGradients out;
  out.sampled_labels.resize(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const double u = uniform01(gen());
    const auto p = fwd.probs.row(n);
    // First class whose cumulative mass exceeds u; zero-mass classes are skipped.
    int chosen = -1;
    int last_positive = 0;
    double cum = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (p[c] <= 0.0) continue;
      last_positive = static_cast<int>(c);
      cum += p[c];
      if (u < cum) {
        chosen = static_cast<int>(c);
        break;
      }
    }
    out.sampled_labels[n] = chosen >= 0 ? chosen : last_positive;
  }
  Batch pseudo = batch;
  pseudo.labels = out.sampled_labels;
  out.jacobian = batch_linearize(spec, theta, pseudo).jacobian;
  return out;
}

LayerStatistics layer_statistics(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                                 std::size_t layer) {
  check_shapes(spec, theta, batch);
  if (layer >= spec.num_layers()) throw Error(ErrorCode::kInvalidArgument, "layer index out of range");
  const Network net(spec, theta.span());
  const std::size_t fan_in = spec.widths[layer];
  const std::size_t fan_out = spec.widths[layer + 1];
  LayerStatistics st{DenseMatrix(batch.size(), fan_in + 1), DenseMatrix(batch.size(), fan_out)};
  Network::Trace trace;
  std::vector<std::vector<double>> deltas;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    net.forward(batch.inputs.row(n), trace);
    const HeadEval head = evaluate_head(spec, trace.logits(), label_of(batch, n), target_of(batch, n));
    net.backward_deltas(trace, head.dz, deltas);
    st.inputs(n, 0) = 1.0;
    for (std::size_t j = 0; j < fan_in; ++j) st.inputs(n, j + 1) = trace.activations[layer][j];
    for (std::size_t i = 0; i < fan_out; ++i) st.output_grads(n, i) = deltas[layer][i];
  }
  return st;
}

}  // namespace natgrad
