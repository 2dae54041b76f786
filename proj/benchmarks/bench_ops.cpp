#include <benchmark/benchmark.h>

#include "aal/ops.hpp"
#include "aal/random.hpp"
#include "aal/resize.hpp"

namespace {

template <typename T>
aal::Tensor<T> filled(const aal::Shape& shape, std::uint64_t seed) {
  aal::Rng rng(seed);
  aal::Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-1, 1));
  return t;
}

template <typename T>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled<T>({n, n}, 1), b = filled<T>({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(aal::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul<float>)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Matmul<double>)->Arg(64)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), side = static_cast<std::size_t>(state.range(1));
  const auto x = filled<float>({64, c, side, side}, 3), w = filled<float>({2 * c, c, 3, 3}, 4);
  const auto bias = filled<float>({2 * c}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(aal::conv2d(x, w, bias, 1, 1));
}
BENCHMARK(BM_Conv2d)->Args({3, 32})->Args({8, 16})->Args({16, 8});

void BM_SoftmaxRows(benchmark::State& state) {
  const auto x = filled<float>({4096, 65}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(aal::softmax(x, -1));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(x.numel() * sizeof(float)));
}
BENCHMARK(BM_SoftmaxRows);

void BM_Bicubic(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto x = filled<float>({64, 8, side, side}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(aal::bicubic_resize(x, 8, 8));
}
BENCHMARK(BM_Bicubic)->Arg(32)->Arg(16)->Arg(4);

}  // namespace
