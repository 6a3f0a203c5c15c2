#include <benchmark/benchmark.h>

#include "gtem/scan.hpp"

using namespace gtem;

namespace {

Tensor rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(shape_numel(s)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(s), std::move(v));
}

} // namespace

static void SelectiveScanForward(benchmark::State& state) {
    const int64_t l = state.range(0);
    const int64_t c = 16, n = 16;
    Rng rng(1);
    NoGradGuard ng;
    Tensor u = rand_tensor({l, c}, rng);
    Tensor delta = rand_tensor({l, c}, rng, 0.01, 0.3);
    Tensor b = rand_tensor({l, n}, rng);
    Tensor cm = rand_tensor({l, n}, rng);
    Tensor a = rand_tensor({c, n}, rng, -2.0, -0.1);
    Tensor d = rand_tensor({c}, rng);
    for (auto _ : state) {
        Tensor y = selective_scan(u, delta, b, cm, a, d);
        benchmark::DoNotOptimize(y.node.get());
    }
    state.SetItemsProcessed(state.iterations() * l * c * n);
}
BENCHMARK(SelectiveScanForward)->RangeMultiplier(4)->Range(256, 16384);

static void SelectiveScanBackward(benchmark::State& state) {
    const int64_t l = state.range(0);
    const int64_t c = 16, n = 16;
    Rng rng(2);
    Tensor u = rand_tensor({l, c}, rng).set_requires_grad(true);
    Tensor delta = rand_tensor({l, c}, rng, 0.01, 0.3).set_requires_grad(true);
    Tensor b = rand_tensor({l, n}, rng).set_requires_grad(true);
    Tensor cm = rand_tensor({l, n}, rng).set_requires_grad(true);
    Tensor a = rand_tensor({c, n}, rng, -2.0, -0.1).set_requires_grad(true);
    Tensor d = rand_tensor({c}, rng).set_requires_grad(true);
    for (auto _ : state) {
        backward(sum(selective_scan(u, delta, b, cm, a, d)));
        u.clear_grad();
        delta.clear_grad();
        b.clear_grad();
        cm.clear_grad();
        a.clear_grad();
        d.clear_grad();
    }
    state.SetItemsProcessed(state.iterations() * l * c * n);
}
BENCHMARK(SelectiveScanBackward)->RangeMultiplier(4)->Range(256, 4096);

static void GtmbForward(benchmark::State& state) {
    const int64_t hw = state.range(0);
    ParamStore store;
    Rng rng(3);
    GtmbWeights w;
    w.init(store, "g", 32, 16, rng);
    NoGradGuard ng;
    Tensor x = rand_tensor({4, 32, hw, hw}, rng);
    for (auto _ : state) {
        Tensor y = gtmb(x, ScanOrder::BTS, w);
        benchmark::DoNotOptimize(y.node.get());
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(GtmbForward)->Arg(8)->Arg(16);
