#include <benchmark/benchmark.h>

#include <vector>

#include "terraseg/ops.hpp"
#include "terraseg/rng.hpp"
#include "terraseg/tensor.hpp"

namespace {

using terraseg::NoGradGuard;
using terraseg::Rng;
using terraseg::Tensor;
namespace ops = terraseg::ops;

Tensor<float> random_tensor(terraseg::Shape shape, Rng& rng) {
    std::vector<float> v(terraseg::shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return Tensor<float>::from_data(std::move(shape), std::move(v));
}

void BM_MatmulSquare(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    auto a = random_tensor({n, n}, rng);
    auto b = random_tensor({n, n}, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        auto c = ops::matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_MatmulSquare)->Arg(256)->Arg(512)->Arg(1024);

void BM_Conv2dFuse(benchmark::State& state) {
    // Channel-heavy 3x3 convolution shaped like the decoder's fuse stage.
    const auto c_in = static_cast<std::size_t>(state.range(0));
    const auto c_out = static_cast<std::size_t>(state.range(1));
    const auto hw = static_cast<std::size_t>(state.range(2));
    Rng rng(2);
    auto x = random_tensor({c_in, hw, hw}, rng);
    auto w = random_tensor({c_out, c_in, 3, 3}, rng);
    auto b = random_tensor({c_out}, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        auto y = ops::conv2d(x, w, b, 1, 2, 2);
        benchmark::DoNotOptimize(y.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * c_in * c_out * 9 * hw * hw);
}
BENCHMARK(BM_Conv2dFuse)->Args({256, 64, 32})->Args({1024, 256, 64})->Unit(benchmark::kMillisecond);

void BM_DepthwiseConv(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto hw = static_cast<std::size_t>(state.range(1));
    Rng rng(3);
    auto x = random_tensor({c, hw, hw}, rng);
    auto w = random_tensor({c, 3, 3}, rng);
    auto b = random_tensor({c}, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        auto y = ops::depthwise_conv2d(x, w, b, 1);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_DepthwiseConv)->Args({256, 128})->Unit(benchmark::kMillisecond);

void BM_SoftmaxRows(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(4);
    auto x = random_tensor({n, 256}, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        auto y = ops::softmax_rows(x, 8.0f);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_SoftmaxRows)->Arg(16384)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
