// Parallel kernels against their serial reference twins.

#include <benchmark/benchmark.h>

#include "hop/kernels.hpp"
#include "hop/pooling.hpp"
#include "hop/rng.hpp"

namespace {

hop::BasicMatrix<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  hop::Rng rng(seed);
  hop::BasicMatrix<float> m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
  return m;
}

template <auto Kernel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b, hop::Accumulation::kWide));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// A batch of 64 sequences of length 128 with Q = 64, pooled to four moments.
template <auto Kernel>
void BM_PoolBatch(benchmark::State& state) {
  const std::size_t batch = 64, length = 128, channels = 64;
  hop::RaggedLayout layout;
  for (std::size_t b = 0; b <= batch; ++b) layout.offsets.push_back(b * length);
  const auto tokens = random_matrix(batch * length, channels, 3);
  const hop::PoolingSpec spec{hop::PoolingKind::kMoments, static_cast<int>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(tokens, layout, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}

}  // namespace

BENCHMARK(BM_Matmul<hop::kernels::matmul<float>>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<hop::reference::matmul<float>>)->Name("matmul/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_PoolBatch<hop::pool_batch<float>>)->Name("pool_batch/parallel")->Arg(2)->Arg(4);
BENCHMARK(BM_PoolBatch<hop::reference::pool_batch<float>>)
    ->Name("pool_batch/reference")
    ->Arg(2)
    ->Arg(4);

BENCHMARK_MAIN();
