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

#include <vector>

#include "natgrad/kernels.hpp"
#include "test_support.hpp"

namespace natgrad {
namespace {

using testing::Rng;

struct Shape {
  std::size_t rows, cols;
};

class KernelAgreement : public ::testing::TestWithParam<Shape> {};

TEST_P(KernelAgreement, ParallelMatchesSerialBitForBit) {
  const auto [rows, cols] = GetParam();
  Rng rng(rows * 131 + cols);
  const DenseMatrix a = testing::random_matrix(rows, cols, rng);
  const DenseVector x = testing::random_vector(cols, rng);
  const DenseVector y = testing::random_vector(rows, rng);

  std::vector<double> gram_ref(rows * rows), cross_ref(cols * cols), mv_ref(rows), mvt_ref(cols);
  kernels::serial::gram(a.view(), gram_ref);
  kernels::serial::cross_product(a.view(), cross_ref);
  kernels::serial::matvec(a.view(), x, mv_ref);
  kernels::serial::matvec_transposed(a.view(), y, mvt_ref);

  const int saved = kernels::num_threads();
  for (int threads : {1, 2, 3, 8}) {
    kernels::set_num_threads(threads);
    std::vector<double> g(rows * rows), c(cols * cols), mv(rows), mvt(cols);
    kernels::parallel::gram(a.view(), g);
    kernels::parallel::cross_product(a.view(), c);
    kernels::parallel::matvec(a.view(), x, mv);
    kernels::parallel::matvec_transposed(a.view(), y, mvt);
    EXPECT_EQ(g, gram_ref) << threads;
    EXPECT_EQ(c, cross_ref) << threads;
    EXPECT_EQ(mv, mv_ref) << threads;
    EXPECT_EQ(mvt, mvt_ref) << threads;
  }
  kernels::set_num_threads(saved);
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelAgreement,
                         ::testing::Values(Shape{1, 1}, Shape{3, 7}, Shape{7, 3}, Shape{16, 200}, Shape{65, 33}));

TEST(Kernels, GramMatchesEigen) {
  Rng rng(5);
  const DenseMatrix a = testing::random_matrix(6, 11, rng);
  std::vector<double> out(36);
  kernels::parallel::gram(a.view(), out);
  const Eigen::MatrixXd ref = testing::to_eigen(a) * testing::to_eigen(a).transpose();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out[i * 6 + j], ref(i, j), 1e-12);
}

TEST(Kernels, ThreadSettingRoundTrips) {
  const int saved = kernels::num_threads();
  kernels::set_num_threads(3);
  EXPECT_EQ(kernels::num_threads(), 3);
  kernels::set_num_threads(saved);
}

}  // namespace
}  // namespace natgrad
