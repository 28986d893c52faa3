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

// Serial reference kernels against their OpenMP counterparts on Jacobian
// shapes typical of the desk experiments (N samples × P parameters).

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "natgrad/kernels.hpp"

namespace {

using natgrad::kernels::ConstMatrixView;

struct Fixture {
  std::vector<double> a, x, out;
  ConstMatrixView view;

  Fixture(std::size_t rows, std::size_t cols) : a(rows * cols), x(std::max(rows, cols)) {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> normal;
    for (auto& v : a) v = normal(rng);
    for (auto& v : x) v = normal(rng);
    view = {a.data(), rows, cols};
  }
};

template <auto Kernel>
void BM_Gram(benchmark::State& state) {
  Fixture f(state.range(0), state.range(1));
  f.out.resize(f.view.rows * f.view.rows);
  for (auto _ : state) {
    Kernel(f.view, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

template <auto Kernel>
void BM_CrossProduct(benchmark::State& state) {
  Fixture f(state.range(0), state.range(1));
  f.out.resize(f.view.cols * f.view.cols);
  for (auto _ : state) {
    Kernel(f.view, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

template <auto Kernel>
void BM_MatvecTransposed(benchmark::State& state) {
  Fixture f(state.range(0), state.range(1));
  f.out.resize(f.view.cols);
  for (auto _ : state) {
    Kernel(f.view, std::span<const double>(f.x).first(f.view.rows), f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
}

void JacobianShapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 5508})->Args({256, 5508})->Args({64, 50000});
}

void FisherShapes(benchmark::internal::Benchmark* b) { b->Args({64, 500})->Args({256, 1500}); }

BENCHMARK(BM_Gram<natgrad::kernels::serial::gram>)->Apply(JacobianShapes)->Name("gram/serial");
BENCHMARK(BM_Gram<natgrad::kernels::parallel::gram>)->Apply(JacobianShapes)->Name("gram/parallel")->UseRealTime();
BENCHMARK(BM_CrossProduct<natgrad::kernels::serial::cross_product>)->Apply(FisherShapes)->Name("cross_product/serial");
BENCHMARK(BM_CrossProduct<natgrad::kernels::parallel::cross_product>)
    ->Apply(FisherShapes)
    ->Name("cross_product/parallel")
    ->UseRealTime();
BENCHMARK(BM_MatvecTransposed<natgrad::kernels::serial::matvec_transposed>)
    ->Apply(JacobianShapes)
    ->Name("matvec_transposed/serial");
BENCHMARK(BM_MatvecTransposed<natgrad::kernels::parallel::matvec_transposed>)
    ->Apply(JacobianShapes)
    ->Name("matvec_transposed/parallel")
    ->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
