// Copyright 2026 The FlowCon Authors.
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

// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "flowcon/datasets.hpp"
#include "flowcon/flow.hpp"
#include "flowcon/kernels.hpp"
#include "flowcon/oodscore.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

template <auto Kernel>
void BM_matmul(benchmark::State& state) {
  const std::size_t m = state.range(0), k = state.range(1), n = state.range(2);
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Kernel(a, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * m * k * n);
}

constexpr void (*kSerialMatmul)(std::span<const double>, std::span<const double>,
                                std::span<double>, std::size_t, std::size_t, std::size_t) =
    flowcon::kernels::serial::matmul;
constexpr void (*kParallelMatmul)(std::span<const double>, std::span<const double>,
                                  std::span<double>, std::size_t, std::size_t, std::size_t) =
    flowcon::kernels::parallel::matmul;

void matmul_shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 64, 64})->Args({64, 512, 128})->Args({256, 128, 512});
}

BENCHMARK(BM_matmul<kSerialMatmul>)->Name("matmul/serial")->Apply(matmul_shapes);
BENCHMARK(BM_matmul<kParallelMatmul>)->Name("matmul/parallel")->Apply(matmul_shapes);

template <bool Parallel>
void BM_score(benchmark::State& state) {
  const std::size_t d = 64;
  const flowcon::FlowModel model = flowcon::init_model(d, 8, 64, 1);
  const flowcon::FeatureDataset train = flowcon::gen_blobs(10, d, 50, 4.0, 1.0, 1);
  const auto protos = flowcon::compute_prototypes(model, train);
  for (auto _ : state) {
    auto s = Parallel ? flowcon::parallel::score_dataset(model, protos, train)
                      : flowcon::serial::score_dataset(model, protos, train);
    benchmark::DoNotOptimize(s.data());
  }
  state.SetItemsProcessed(state.iterations() * train.size());
}

BENCHMARK(BM_score<false>)->Name("score_dataset/serial");
BENCHMARK(BM_score<true>)->Name("score_dataset/parallel");

}  // namespace

BENCHMARK_MAIN();
