// Parallel kernels against the serial reference on training-sized shapes.
//
//   SHEDD_THREADS=4 ./build/bench_kernels

#include <cstdlib>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "shedd/kernels.hpp"

namespace k = shedd::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

// batch 32, first encoder block of each modality plus a deeper block
k::ConvGeometry geometry(int which) {
    switch (which) {
        case 0: return {32, 8, 32, 32, 8, 3, 3, 1, 1};
        case 1: return {32, 2, 32, 32, 8, 3, 3, 1, 1};
        default: return {32, 16, 8, 8, 32, 3, 3, 1, 1};
    }
}

void apply_threads() {
    const char* env = std::getenv("SHEDD_THREADS");
    k::set_num_threads(env ? std::atoi(env) : 1);
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& state) {
    apply_threads();
    const auto g = geometry(static_cast<int>(state.range(0)));
    const auto x = random_vec(g.input_size(), 1);
    const auto w = random_vec(g.weight_size(), 2);
    std::vector<float> out(g.output_size());
    for (auto _ : state) {
        if constexpr (Parallel)
            k::conv2d_forward<float>(g, x, w, out);
        else
            k::reference::conv2d_forward<float>(g, x, w, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.output_size()));
}

template <bool Parallel>
void BM_conv_backward_input(benchmark::State& state) {
    apply_threads();
    const auto g = geometry(static_cast<int>(state.range(0)));
    const auto go = random_vec(g.output_size(), 1);
    const auto w = random_vec(g.weight_size(), 2);
    std::vector<float> gx(g.input_size());
    for (auto _ : state) {
        if constexpr (Parallel)
            k::conv2d_backward_input<float>(g, go, w, gx);
        else
            k::reference::conv2d_backward_input<float>(g, go, w, gx);
        benchmark::DoNotOptimize(gx.data());
    }
}

template <bool Parallel>
void BM_conv_backward_weight(benchmark::State& state) {
    apply_threads();
    const auto g = geometry(static_cast<int>(state.range(0)));
    const auto x = random_vec(g.input_size(), 1);
    const auto go = random_vec(g.output_size(), 2);
    std::vector<float> gw(g.weight_size());
    for (auto _ : state) {
        if constexpr (Parallel)
            k::conv2d_backward_weight<float>(g, x, go, gw);
        else
            k::reference::conv2d_backward_weight<float>(g, x, go, gw);
        benchmark::DoNotOptimize(gw.data());
    }
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
    apply_threads();
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1);
    const auto b = random_vec(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::matmul_nn<float>(n, n, n, a, b, c);
        else
            k::reference::matmul_nn<float>(n, n, n, a, b, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

}  // namespace

BENCHMARK(BM_conv_forward<true>)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_forward<false>)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_backward_input<true>)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_backward_input<false>)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_backward_weight<true>)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_conv_backward_weight<false>)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_matmul<true>)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_matmul<false>)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
