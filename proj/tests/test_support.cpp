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

#include "test_support.hpp"

#include <algorithm>
#include <cmath>

namespace natgrad::testing {

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

DenseVector random_vector(std::size_t n, Rng& rng) {
  DenseVector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

Batch random_batch(const ModelSpec& spec, std::size_t n, Rng& rng) {
  Batch b;
  b.inputs = random_matrix(n, spec.input_dim(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (spec.is_classification()) {
      b.labels.push_back(static_cast<int>(rng() % spec.classes));
    } else {
      b.targets.push_back(normal(rng));
    }
  }
  return b;
}

ParameterVector random_theta(const ModelSpec& spec, Rng& rng) {
  ParameterVector theta = init_parameters(spec, rng());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += 0.1 * normal(rng);
  return theta;
}

Eigen::MatrixXd to_eigen(const DenseMatrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  }
  return out;
}

Eigen::VectorXd to_eigen(const DenseVector& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

DenseVector from_eigen(const Eigen::VectorXd& v) {
  DenseVector out(static_cast<std::size_t>(v.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v(i);
  return out;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  }
  return worst;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double relative_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

DenseMatrix numerical_jacobian(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch, double h) {
  DenseMatrix jac(batch.size(), theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    ParameterVector plus = theta, minus = theta;
    plus[i] += h;
    minus[i] -= h;
    const ForwardResult fp = forward(spec, plus, batch), fm = forward(spec, minus, batch);
    for (std::size_t n = 0; n < batch.size(); ++n) jac(n, i) = (fp.losses[n] - fm.losses[n]) / (2.0 * h);
  }
  return jac;
}

ModelSpec lls_spec() { return ModelSpec::least_squares(1); }

Batch lls_data() {
  Batch b;
  b.inputs = DenseMatrix{{0.0}, {1.0}};
  b.targets = {0.0, 0.0};
  return b;
}

ModelSpec logistic_spec() { return ModelSpec::logistic(1); }

Batch logistic_data() {
  Batch b;
  b.inputs = DenseMatrix{{0.0}, {2.0}};
  b.labels = {0, 1};
  return b;
}

ParameterVector params(const ModelSpec& spec, std::initializer_list<double> values) {
  return ParameterVector::from_values(spec, DenseVector(values));
}

}  // namespace natgrad::testing
