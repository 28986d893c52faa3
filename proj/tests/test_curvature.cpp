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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "natgrad/curvature.hpp"
#include "natgrad/evaluation.hpp"
#include "natgrad/oracle.hpp"
#include "natgrad/updates.hpp"
#include "test_support.hpp"

namespace natgrad {
namespace {

using testing::code_of;
using testing::Rng;

const ModelSpec kLls = testing::lls_spec();
const ModelSpec kLogistic = testing::logistic_spec();

TEST(Fisher, ToyClosedForms) {
  EXPECT_EQ(build_fisher(kLls, testing::params(kLls, {1, 1}), testing::lls_data()).matrix,
            (DenseMatrix{{2, 1}, {1, 1}}));
  const DenseMatrix f = build_fisher(kLogistic, testing::params(kLogistic, {0, 0}), testing::logistic_data()).matrix;
  EXPECT_LT(testing::max_abs_diff(f, 0.25 * DenseMatrix{{2, 2}, {2, 4}}), 1e-15);
}

TEST(Fisher, ConvergedClassifierVanishes) {
  const ModelSpec spec = ModelSpec::mlp(1, {}, 3);
  const ParameterVector theta = testing::params(spec, {0, 0, 800, 0, 0, 0});
  Batch b;
  b.inputs = DenseMatrix{{0.5}, {-2.0}};
  b.labels = {1, 1};
  EXPECT_EQ(max_abs(build_fisher(spec, theta, b).matrix), 0.0);
}

TEST(Fisher, EqualsFvpColumnAssembly) {
  Rng rng(1);
  for (const ModelSpec& spec : {ModelSpec::mlp(3, {4}, 3), ModelSpec::mlp(2, {3, 3}, 4),
                                ModelSpec::logistic(3, {3}), ModelSpec::least_squares(3, {4})}) {
    const ParameterVector theta = testing::random_theta(spec, rng);
    const Batch b = testing::random_batch(spec, 6, rng);
    const DenseMatrix f = build_fisher(spec, theta, b).matrix;
    ASSERT_LE(theta.size(), 60u);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      DenseVector e(theta.size());
      e[i] = 1.0;
      const DenseVector col = fisher_vector_product(spec, theta, b, e);
      for (std::size_t r = 0; r < theta.size(); ++r) EXPECT_NEAR(col[r], f(r, i), 1e-8) << spec.describe();
    }
  }
}

// Σ_n Σ_c p_n(c) ∇log p_n(c) ∇log p_n(c)ᵀ from per-class Jacobians.
TEST(Fisher, MatchesLogLikelihoodOuterProducts) {
  Rng rng(2);
  const ModelSpec spec = ModelSpec::mlp(3, {4}, 3);
  const ParameterVector theta = testing::random_theta(spec, rng);
  const Batch b = testing::random_batch(spec, 4, rng);
  const ForwardResult fwd = forward(spec, theta, b);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(theta.size(), theta.size());
  for (int c = 0; c < 3; ++c) {
    Batch relabelled = b;
    relabelled.labels.assign(b.size(), c);
    const Eigen::MatrixXd j = testing::to_eigen(batch_linearize(spec, theta, relabelled).jacobian);
    for (std::size_t n = 0; n < b.size(); ++n) ref += fwd.probs(n, c) * j.row(n).transpose() * j.row(n);
  }
  const Eigen::MatrixXd f = testing::to_eigen(build_fisher(spec, theta, b).matrix);
  EXPECT_LT((f - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Fisher, LeastSquaresEqualsIefAndGaussNewton) {
  Rng rng(3);
  const ModelSpec spec = ModelSpec::least_squares(3, {4}, Activation::kIdentity);
  for (int trial = 0; trial < 5; ++trial) {
    const ParameterVector theta = testing::random_theta(spec, rng);
    const Batch b = testing::random_batch(spec, 5, rng);
    const DenseMatrix f = build_fisher(spec, theta, b).matrix;
    const DenseMatrix gn = build_gn(spec, theta, b).matrix;
    const DenseMatrix ief = build_ief(batch_linearize(spec, theta, b)).matrix;
    const double scale = max_abs(f);
    EXPECT_LT(testing::max_abs_diff(f, gn), 1e-10 * scale);
    EXPECT_LT(testing::max_abs_diff(f, ief), 1e-10 * scale);
  }
}

TEST(Fisher, TooLarge) {
  const ModelSpec spec = ModelSpec::mlp(100, {40}, 3);  // P = 4163
  Rng rng(4);
  const Batch b = testing::random_batch(spec, 1, rng);
  EXPECT_EQ(code_of([&] { build_fisher(spec, ParameterVector::zeros(spec), b); }), ErrorCode::kTooLarge);
}

TEST(EmpiricalFisher, ClosedFormsAndRank) {
  const BatchLinearization lin = batch_linearize(kLls, testing::params(kLls, {1, 1}), testing::lls_data());
  EXPECT_EQ(build_ef(lin).matrix, (DenseMatrix{{5, 4}, {4, 4}}));
  BatchLinearization zero = lin;
  zero.jacobian = DenseMatrix(2, 2);
  EXPECT_EQ(max_abs(build_ef(zero).matrix), 0.0);

  Rng rng(5);
  const ModelSpec spec = ModelSpec::mlp(3, {4}, 3);
  const BatchLinearization big = batch_linearize(spec, testing::random_theta(spec, rng), testing::random_batch(spec, 3, rng));
  const DenseMatrix ef = build_ef(big).matrix;
  const auto eig = symmetric_eigenvalues(ef);
  const double top = *std::max_element(eig.begin(), eig.end());
  const auto nonzero = std::count_if(eig.begin(), eig.end(), [&](double e) { return e > 1e-10 * top; });
  EXPECT_LE(nonzero, 3);
}

TEST(IefMatrix, ToyEqualsFisherAndUnitScaling) {
  const BatchLinearization lin = batch_linearize(kLls, testing::params(kLls, {1, 1}), testing::lls_data());
  EXPECT_EQ(build_ief(lin).matrix, (DenseMatrix{{2, 1}, {1, 1}}));
  BatchLinearization ones = lin;
  ones.sief = DenseVector(2, 1.0);
  EXPECT_EQ(build_ief(ones).matrix, build_ef(ones).matrix);
  BatchLinearization zero = lin;
  zero.sief[0] = 0.0;
  EXPECT_EQ(code_of([&] { build_ief(zero); }), ErrorCode::kZeroScale);
}

TEST(IefMatrix, SolveMatchesIefUpdate) {
  Rng rng(6);
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  int checked = 0;
  for (int trial = 0; trial < 20 && checked < 5; ++trial) {
    const BatchLinearization lin =
        batch_linearize(spec, testing::random_theta(spec, rng), testing::random_batch(spec, 4, rng));
    if (spd_condition(gram(lin.jacobian)) > 1e5) continue;
    ++checked;
    const DenseMatrix fief = build_ief(lin).matrix;
    const double lambda_param = 1e-10 * trace(fief) / static_cast<double>(lin.batch_size());
    const double lambda_sample = Damping::trace_relative(1e-10).resolve(lin);
    const DenseVector dense = oracle::solve(fief, lin.total_grad, lambda_param);
    const DenseVector sample_space = ief_update(lin, lambda_sample).direction;
    EXPECT_LT(oracle::relative_error(sample_space, dense), 1e-4);
  }
  EXPECT_GT(checked, 0);
}

TEST(Invariants, AllBuildersSymmetricPsd) {
  Rng rng(7);
  const ModelSpec spec = ModelSpec::mlp(3, {4}, 3);
  const ParameterVector theta = testing::random_theta(spec, rng);
  const Batch b = testing::random_batch(spec, 5, rng);
  const BatchLinearization lin = batch_linearize(spec, theta, b);
  for (const CurvatureMatrix& c :
       {build_fisher(spec, theta, b), build_gn(spec, theta, b), build_ef(lin), build_ief(lin),
        build_sf(sample_pseudo_gradients(spec, theta, b, 1).jacobian)})
    EXPECT_TRUE(satisfies_curvature_invariants(c)) << to_string(c.kind);
  EXPECT_FALSE(satisfies_curvature_invariants({CurvatureKind::kEf, DenseMatrix{{1, 0}, {0, -1}}, "bad"}));
  EXPECT_FALSE(satisfies_curvature_invariants({CurvatureKind::kEf, DenseMatrix{{1, 1}, {0, 1}}, "bad"}));
}

TEST(SampledFisher, UnbiasedOverSeeds) {
  const ParameterVector theta = testing::params(kLogistic, {0.3, -0.4});
  const Batch b = testing::logistic_data();
  const DenseMatrix f = build_fisher(kLogistic, theta, b).matrix;
  constexpr int kSeeds = 10000;
  double sum[4] = {}, sq[4] = {};
  for (int seed = 0; seed < kSeeds; ++seed) {
    const DenseMatrix s = build_sf(sample_pseudo_gradients(kLogistic, theta, b, seed).jacobian).matrix;
    for (int k = 0; k < 4; ++k) {
      sum[k] += s.data()[k];
      sq[k] += s.data()[k] * s.data()[k];
    }
  }
  for (int k = 0; k < 4; ++k) {
    const double mean = sum[k] / kSeeds;
    const double sd = std::sqrt(std::max(sq[k] / kSeeds - mean * mean, 0.0));
    EXPECT_LE(std::abs(mean - f.data()[k]), 3.0 * sd / std::sqrt(kSeeds) + 1e-15) << k;
  }
}

TEST(WoodFisher, EqualsScaledBatchMatrices) {
  const BatchLinearization lin = batch_linearize(kLls, testing::params(kLls, {1, 1}), testing::lls_data());
  EXPECT_EQ(woodfisher_recursion(lin, WoodFisherVariant::kEf).matrix, (0.5 * DenseMatrix{{5, 4}, {4, 4}}));

  Rng rng(8);
  const ModelSpec spec = ModelSpec::mlp(3, {3}, 3);
  const BatchLinearization r = batch_linearize(spec, testing::random_theta(spec, rng), testing::random_batch(spec, 6, rng));
  const double inv_n = 1.0 / 6.0;
  for (auto variant : {WoodFisherVariant::kEf, WoodFisherVariant::kIef}) {
    const DenseMatrix wf = woodfisher_recursion(r, variant).matrix;
    const DenseMatrix ref = inv_n * (variant == WoodFisherVariant::kEf ? build_ef(r).matrix : build_ief(r).matrix);
    EXPECT_LT(testing::max_abs_diff(wf, ref), 1e-10 * max_abs(ref));
    const std::vector<std::size_t> order{5, 2, 0, 4, 1, 3};
    EXPECT_LT(testing::max_abs_diff(woodfisher_recursion(r, variant, order).matrix, wf), 1e-12 * max_abs(wf));
  }
}

TEST(WoodFisher, SingleSampleIsOuterProduct) {
  Rng rng(9);
  const ModelSpec spec = ModelSpec::mlp(2, {2}, 2);
  const BatchLinearization lin =
      batch_linearize(spec, testing::random_theta(spec, rng), testing::random_batch(spec, 1, rng));
  const auto g = lin.jacobian.row(0);
  const DenseMatrix wf = woodfisher_recursion(lin, WoodFisherVariant::kEf).matrix;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_DOUBLE_EQ(wf(i, j), g[i] * g[j]);
  const std::vector<std::size_t> bad{1};
  EXPECT_EQ(code_of([&] { woodfisher_recursion(lin, WoodFisherVariant::kEf, bad); }), ErrorCode::kInvalidArgument);
}

TEST(Kfac, SingleSampleBlockIsExact) {
  Rng rng(10);
  const ModelSpec spec = ModelSpec::mlp(3, {4}, 3);
  const ParameterVector theta = testing::random_theta(spec, rng);
  const Batch b = testing::random_batch(spec, 1, rng);
  const BatchLinearization lin = batch_linearize(spec, theta, b);
  const DenseMatrix ef = build_ef(lin).matrix;
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const LayerStatistics st = layer_statistics(spec, theta, b, layer);
    const KroneckerFactorPair pair = build_kfac_factors(st.inputs, st.output_grads, lin.sief, KfacVariant::kEkfac, layer);
    const DenseMatrix block = pair.block();
    const LayerSlice slice = theta.layout()[layer];
    const std::size_t size = slice.rows * slice.cols;
    ASSERT_EQ(block.rows(), size);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        EXPECT_NEAR(block(i, j), ef(slice.offset + i, slice.offset + j), 1e-12 * max_abs(ef));
  }
}

TEST(Kfac, FactorsAndVariants) {
  const DenseMatrix ones_a(3, 4, 1.0), ones_g(3, 2, 1.0);
  const DenseVector s(3, 1.0);
  const KroneckerFactorPair p = build_kfac_factors(ones_a, ones_g, s, KfacVariant::kEkfac);
  EXPECT_EQ(p.a, DenseMatrix(4, 4, 1.0));
  EXPECT_EQ(p.g, DenseMatrix(2, 2, 1.0));

  Rng rng(11);
  const DenseMatrix a = testing::random_matrix(5, 3, rng), g = testing::random_matrix(5, 2, rng);
  const KroneckerFactorPair ek = build_kfac_factors(a, g, DenseVector(5, 1.0), KfacVariant::kEkfac);
  const KroneckerFactorPair iek = build_kfac_factors(a, g, DenseVector(5, 1.0), KfacVariant::kIekfac);
  EXPECT_LT(testing::max_abs_diff(ek.g, iek.g), 1e-15);
  EXPECT_EQ(ek.a, iek.a);
  DenseVector s2(5, 1.0);
  s2[2] = 0.0;
  EXPECT_EQ(code_of([&] { build_kfac_factors(a, g, s2, KfacVariant::kIekfac); }), ErrorCode::kZeroScale);
  EXPECT_EQ(code_of([&] { build_kfac_factors(a, DenseMatrix(4, 2), s2, KfacVariant::kEkfac); }),
            ErrorCode::kShapeMismatch);
}

}  // namespace
}  // namespace natgrad
