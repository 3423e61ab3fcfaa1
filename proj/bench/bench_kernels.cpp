// Serial reference vs OpenMP kernels at the sizes a desk-scale step uses.
//   kmoco_bench --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include <vector>

#include "kmoco/kernels.hpp"
#include "kmoco/rng.hpp"

namespace k = kmoco::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  kmoco::Rng rng = kmoco::derive_rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = kmoco::normal(rng);
  return v;
}

template <bool Parallel>
void BM_gemm_nt(benchmark::State& st) {
  const std::size_t n = st.range(0);
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::gemm_nt(n, n, n, a.data(), b.data(), c.data(), false);
    else
      k::serial::gemm_nt(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * 2 * n * n * n);
}

// batch 32, 32x32 input, channels as the first backbone stage
template <bool Parallel>
void BM_conv_forward(benchmark::State& st) {
  const k::ConvDims d{32, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)), 32, 32};
  const auto x = noise(d.batch * d.in_ch * 32 * 32, 3), w = noise(d.out_ch * d.in_ch * 9, 4), b = noise(d.out_ch, 5);
  std::vector<double> y(d.batch * d.out_ch * 32 * 32);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv3x3_forward(d, x.data(), w.data(), b.data(), y.data());
    else
      k::serial::conv3x3_forward(d, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& st) {
  const k::ConvDims d{32, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)), 32, 32};
  const std::size_t xs = d.batch * d.in_ch * 32 * 32, ys = d.batch * d.out_ch * 32 * 32;
  const auto x = noise(xs, 6), w = noise(d.out_ch * d.in_ch * 9, 7), dy = noise(ys, 8);
  std::vector<double> dx(xs), dw(w.size()), db(d.out_ch);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv3x3_backward(d, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    else
      k::serial::conv3x3_backward(d, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

// k-means assignment over the dense maps of a retrieval run
template <bool Parallel>
void BM_nearest_centroid(benchmark::State& st) {
  const std::size_t n = st.range(0), kc = 8, dim = 64;
  const auto p = noise(n * dim, 9), c = noise(kc * dim, 10);
  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::nearest_centroid(n, kc, dim, p.data(), c.data(), assign.data(), dist.data());
    else
      k::serial::nearest_centroid(n, kc, dim, p.data(), c.data(), assign.data(), dist.data());
    benchmark::DoNotOptimize(dist.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm_nt<false>)->Name("gemm_nt/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm_nt<true>)->Name("gemm_nt/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/serial")->Args({3, 16})->Args({16, 32});
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Args({3, 16})->Args({16, 32});
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/serial")->Args({3, 16})->Args({16, 32});
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Args({3, 16})->Args({16, 32});
BENCHMARK(BM_nearest_centroid<false>)->Name("nearest_centroid/serial")->Arg(4096)->Arg(16384);
BENCHMARK(BM_nearest_centroid<true>)->Name("nearest_centroid/parallel")->Arg(4096)->Arg(16384);

BENCHMARK_MAIN();
