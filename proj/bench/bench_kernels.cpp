// Copyright 2026 The ssvfnas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial versus OpenMP matmul kernels at the shapes the head network uses.

#include <algorithm>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ssvfnas/kernels.hpp"

namespace {

using ssvfnas::kernels::GemmDims;

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <void (*Kernel)(std::span<const double>, std::span<const double>, std::span<double>,
                         GemmDims)>
void BM_Matmul(benchmark::State& state) {
  const GemmDims d{static_cast<std::size_t>(state.range(0)),
                   static_cast<std::size_t>(state.range(1)),
                   static_cast<std::size_t>(state.range(2))};
  const auto a = random_values(d.m * d.k, 1);
  // Sized for both c = a b and c = a^T b.
  const auto b = random_values(std::max(d.k, d.m) * d.n, 2);
  std::vector<double> c(std::max(d.m, d.k) * d.n);
  for (auto _ : state) {
    Kernel(a, b, c, d);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(d.m * d.k * d.n));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 128, 512})->Args({64, 512, 128})->Args({256, 384, 512})->Args({512, 512, 512});
}

BENCHMARK(BM_Matmul<ssvfnas::kernels::serial::matmul>)->Name("matmul/serial")->Apply(shapes);
BENCHMARK(BM_Matmul<ssvfnas::kernels::parallel::matmul>)->Name("matmul/parallel")->Apply(shapes);
BENCHMARK(BM_Matmul<ssvfnas::kernels::serial::matmul_at_b>)->Name("matmul_at_b/serial")->Apply(shapes);
BENCHMARK(BM_Matmul<ssvfnas::kernels::parallel::matmul_at_b>)->Name("matmul_at_b/parallel")->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
