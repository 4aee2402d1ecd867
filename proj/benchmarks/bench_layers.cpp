#include <benchmark/benchmark.h>

#include "acnn/adaptive_conv.hpp"
#include "acnn/deconv.hpp"
#include "acnn/layers.hpp"
#include "acnn/rng.hpp"

using namespace acnn;

namespace {

Tensor random_tensor(Shape s, uint64_t seed) {
    Rng rng(seed);
    Tensor t(s);
    for (long long i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, 0.3));
    return t;
}

void BM_Conv5x5Counting(benchmark::State& state) {
    // the v3 second stage: 32 -> 32 channels at 17x17
    Tensor input = random_tensor(Shape{1, 32, 17, 17}, 1);
    Tensor filters = random_tensor(Shape{32, 32, 5, 5}, 2);
    Tensor bias = random_tensor(Shape{32}, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(conv2d_forward(input, filters, bias, Padding::same));
    state.SetItemsProcessed(state.iterations() * 17LL * 17 * 32 * 32 * 25);
}
BENCHMARK(BM_Conv5x5Counting);

void BM_Conv5x5Backward(benchmark::State& state) {
    Tensor input = random_tensor(Shape{1, 32, 17, 17}, 1);
    Tensor filters = random_tensor(Shape{32, 32, 5, 5}, 2);
    Tensor grad_out = random_tensor(Shape{1, 32, 17, 17}, 4);
    Tensor gin, gf(filters.shape()), gb(Shape{32});
    for (auto _ : state) {
        conv2d_backward(input, filters, Padding::same, grad_out, &gin, &gf, &gb);
        benchmark::DoNotOptimize(gf);
    }
    state.SetItemsProcessed(state.iterations() * 2LL * 17 * 17 * 32 * 32 * 25);
}
BENCHMARK(BM_Conv5x5Backward);

void BM_Conv1dHorizontal(benchmark::State& state) {
    // deconvolution stage 2: 12 -> 12 channels, 1x31 taps on 64x64
    Tensor input = random_tensor(Shape{1, 12, 64, 64}, 1);
    Tensor filters = random_tensor(Shape{12, 12, 1, 31}, 2);
    Tensor bias = random_tensor(Shape{12}, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(conv2d_forward(input, filters, bias, Padding::same));
    state.SetItemsProcessed(state.iterations() * 64LL * 64 * 12 * 12 * 31);
}
BENCHMARK(BM_Conv1dHorizontal);

void BM_Conv1dBackward(benchmark::State& state) {
    Tensor input = random_tensor(Shape{1, 12, 64, 64}, 1);
    Tensor filters = random_tensor(Shape{12, 12, 1, 31}, 2);
    Tensor grad_out = random_tensor(Shape{1, 12, 64, 64}, 4);
    Tensor gin, gf(filters.shape()), gb(Shape{12});
    for (auto _ : state) {
        conv2d_backward(input, filters, Padding::same, grad_out, &gin, &gf, &gb);
        benchmark::DoNotOptimize(gf);
    }
    state.SetItemsProcessed(state.iterations() * 2LL * 64 * 64 * 12 * 12 * 31);
}
BENCHMARK(BM_Conv1dBackward);

void BM_Dense512(benchmark::State& state) {
    Tensor input = random_tensor(Shape{1, 2592}, 1);
    Tensor w = random_tensor(Shape{2592, 512}, 2);
    Tensor b = random_tensor(Shape{512}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(dense_forward(input, w, b));
    state.SetItemsProcessed(state.iterations() * 2592LL * 512);
}
BENCHMARK(BM_Dense512);

void BM_FmnForward(benchmark::State& state) {
    Rng rng(5);
    FilterManifoldNet<float> fmn;
    fmn.build(1, {10, 40}, FilterShape{32, 32, 5, 5}, rng);
    Tensor filters, bias;
    for (auto _ : state) {
        fmn.forward({0.3}, &filters, &bias, nullptr);
        benchmark::DoNotOptimize(filters);
    }
    state.SetItemsProcessed(state.iterations() * 40LL * 25632);
}
BENCHMARK(BM_FmnForward);

void BM_DeconvTrainStep(benchmark::State& state) {
    DeconvModel<float> model;
    model.build(DeconvSpec::acnn(31), 7);
    std::vector<Tensor> images;
    std::vector<std::vector<double>> aux;
    for (int i = 0; i < 8; ++i) {
        images.push_back(random_tensor(Shape{64, 64}, 10 + i));
        aux.push_back({0.1 * i - 0.4});
    }
    std::vector<ParamGrads<float>> chunks;
    for (int i = 0; i < 8; ++i) chunks.push_back(model.make_grads());
    for (auto _ : state) {
        typename DeconvModel<float>::Cache cache;
        auto out = model.forward_batch(images, aux, true, &cache);
        for (auto& c : chunks) c.zero();
        model.backward_into(cache, out, chunks);
        benchmark::DoNotOptimize(chunks);
    }
}
BENCHMARK(BM_DeconvTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
