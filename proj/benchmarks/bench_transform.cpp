#include <benchmark/benchmark.h>

#include "gtem/pipeline.hpp"
#include "gtem/trainer.hpp"

using namespace gtem;

static void LayoutTransforms(benchmark::State& state) {
    Rng rng(1);
    std::vector<double> v(static_cast<size_t>(8 * 32 * 16 * 16));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    Tensor x = Tensor::from({8, 32, 16, 16}, std::move(v));
    NoGradGuard ng;
    const ScanOrder k = static_cast<ScanOrder>(state.range(0));
    for (auto _ : state) {
        Tensor y = inverse_transform(apply_transform(x, k), k, x.shape());
        benchmark::DoNotOptimize(y.node.get());
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(LayoutTransforms)->DenseRange(0, 3);

static void EncodeGop32(benchmark::State& state) {
    VideoCodec codec(CodecConfig::tiny(), 1);
    SyntheticClipSpec spec;
    spec.kind = PatternKind::Gradient;
    spec.vx = 1;
    spec.frames = state.range(0);
    spec.width = 32;
    spec.height = 32;
    spec.seed = 3;
    Tensor clip = make_clip(spec);
    for (auto _ : state) {
        auto enc = codec.encode_gop(clip, false, false);
        benchmark::DoNotOptimize(enc.segments.z.data());
    }
    state.SetItemsProcessed(state.iterations() * clip.numel());
}
BENCHMARK(EncodeGop32)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void TrainStep32(benchmark::State& state) {
    VideoCodec codec(CodecConfig::tiny(), 1);
    auto dataset = make_synthetic_dataset(4, 5, 32, 11);
    Rng noise(5);
    Tensor clip = make_clip(dataset[0]);
    Adam adam(codec.params(), 1e-4);
    for (auto _ : state) {
        TrainForwardOut fwd = codec.train_forward(clip, noise);
        Tensor loss = rd_loss(clip, fwd.x_hat, fwd.y_bits, fwd.z_bits, 256.0);
        adam.zero_grad();
        backward(loss);
        adam.step(1.0);
    }
}
BENCHMARK(TrainStep32)->Unit(benchmark::kMillisecond)->MinTime(2.0);
