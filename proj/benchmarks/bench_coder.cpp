#include <benchmark/benchmark.h>

#include "gtem/coder.hpp"
#include "gtem/rng.hpp"

#include <cmath>

using namespace gtem;

namespace {

struct Workload {
    std::vector<int64_t> symbols;
    std::vector<double> mus, sigmas;
    explicit Workload(size_t n) : symbols(n), mus(n), sigmas(n) {
        Rng rng(7);
        for (size_t i = 0; i < n; ++i) {
            mus[i] = rng.uniform(-4.0, 4.0);
            sigmas[i] = rng.uniform(0.05, 8.0);
            symbols[i] = std::llround(mus[i] + sigmas[i] * rng.normal());
        }
    }
};

} // namespace

static void RangeEncode(benchmark::State& state) {
    Workload w(static_cast<size_t>(state.range(0)));
    for (auto _ : state) {
        std::vector<uint8_t> bytes;
        RangeEncoder enc(bytes);
        CdfTable t;
        for (size_t i = 0; i < w.symbols.size(); ++i) {
            build_cdf_into(w.mus[i], w.sigmas[i], kDefaultAlphabetBound, t);
            encode_value(enc, w.symbols[i], t);
        }
        enc.finish();
        benchmark::DoNotOptimize(bytes.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(RangeEncode)->Arg(10000)->Arg(100000);

static void RangeDecode(benchmark::State& state) {
    Workload w(static_cast<size_t>(state.range(0)));
    std::vector<uint8_t> bytes;
    {
        RangeEncoder enc(bytes);
        CdfTable t;
        for (size_t i = 0; i < w.symbols.size(); ++i) {
            build_cdf_into(w.mus[i], w.sigmas[i], kDefaultAlphabetBound, t);
            encode_value(enc, w.symbols[i], t);
        }
        enc.finish();
    }
    for (auto _ : state) {
        RangeDecoder dec(bytes.data(), bytes.size());
        CdfTable t;
        int64_t acc = 0;
        for (size_t i = 0; i < w.symbols.size(); ++i) {
            build_cdf_into(w.mus[i], w.sigmas[i], kDefaultAlphabetBound, t);
            acc += decode_value(dec, t);
        }
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(RangeDecode)->Arg(10000)->Arg(100000);

static void BuildCdf(benchmark::State& state) {
    Rng rng(9);
    CdfTable t;
    for (auto _ : state) {
        build_cdf_into(rng.uniform(-2.0, 2.0), rng.uniform(0.1, 5.0), kDefaultAlphabetBound, t);
        benchmark::DoNotOptimize(t.cum.data());
    }
}
BENCHMARK(BuildCdf);
