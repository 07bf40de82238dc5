// Parallel kernels versus the serial reference implementations they are
// tested against. Shapes follow the toy detector's finest pyramid level.

#include <benchmark/benchmark.h>

#include <random>

#include "stairnet/kernels.hpp"
#include "stairnet/reference.hpp"

namespace {

using stairnet::Shape4;
using stairnet::Tensor;

Tensor<float> random_tensor(Shape4 s, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  Tensor<float> t(s);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

void BM_Conv3x3Kernel(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  const auto x = random_tensor({4, c, 16, 16}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::kernels::conv2d_forward(x, w, std::span<const float>{}, 1, 1));
  st.SetItemsProcessed(st.iterations() * 4LL * c * c * 9 * 256);
}

void BM_Conv3x3Reference(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  const auto x = random_tensor({4, c, 16, 16}, 1);
  const auto w = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::reference::conv2d(x, w, std::span<const float>{}, 1, 1));
  st.SetItemsProcessed(st.iterations() * 4LL * c * c * 9 * 256);
}

void BM_Conv3x3WeightGradKernel(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  const auto x = random_tensor({4, c, 16, 16}, 1);
  const auto dy = random_tensor({4, c, 16, 16}, 3);
  Tensor<float> dw({c, c, 3, 3});
  for (auto _ : st) {
    stairnet::kernels::conv2d_backward_weight(dy, x, 1, 1, dw, std::span<float>{});
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_Conv3x3WeightGradReference(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  const auto x = random_tensor({4, c, 16, 16}, 1);
  const auto dy = random_tensor({4, c, 16, 16}, 3);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::reference::conv2d_weight_grad(dy, x, {c, c, 3, 3}, 1, 1));
}

void BM_DeconvKernel(benchmark::State& st) {
  const auto x = random_tensor({4, 32, 8, 8}, 1);
  const auto w = random_tensor({32, 32, 2, 2}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::kernels::deconv2d_forward(x, w, std::span<const float>{}, 2, 0));
}

void BM_DeconvReference(benchmark::State& st) {
  const auto x = random_tensor({4, 32, 8, 8}, 1);
  const auto w = random_tensor({32, 32, 2, 2}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::reference::deconv2d(x, w, std::span<const float>{}, 2, 0));
}

void BM_BilinearKernel(benchmark::State& st) {
  const auto x = random_tensor({4, 32, 8, 8}, 1);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::kernels::bilinear_forward(x, 16, 16));
}

void BM_BilinearReference(benchmark::State& st) {
  const auto x = random_tensor({4, 32, 8, 8}, 1);
  for (auto _ : st) benchmark::DoNotOptimize(stairnet::reference::bilinear(x, 16, 16));
}

}  // namespace

BENCHMARK(BM_Conv3x3Kernel)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_Conv3x3Reference)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_Conv3x3WeightGradKernel)->Arg(32);
BENCHMARK(BM_Conv3x3WeightGradReference)->Arg(32);
BENCHMARK(BM_DeconvKernel);
BENCHMARK(BM_DeconvReference);
BENCHMARK(BM_BilinearKernel);
BENCHMARK(BM_BilinearReference);
BENCHMARK_MAIN();
