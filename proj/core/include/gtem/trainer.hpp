#pragma once

#include "gtem/pipeline.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace gtem {

struct LossWeights {
    double lambda = 256.0;
    double lambda_per = 1.0;
    double lambda_sty = 0.15;
};

// sum_i R(y_i) + R(z_i) + lambda MSE(x_hat_i, x_i); rates in bits per pixel
Tensor rd_loss(const Tensor& x, const Tensor& x_hat, const Tensor& y_bits, const Tensor& z_bits,
               double lambda);

// Frozen random multi-scale conv stack standing in for a pretrained feature
// network. Weights are regenerated from the seed, never checkpointed.
class FeatureExtractor {
public:
    explicit FeatureExtractor(uint64_t seed = 7777);
    std::vector<Tensor> features(const Tensor& frames) const; // 3 scales

private:
    std::array<Tensor, 3> kernels_;
    std::array<Tensor, 3> biases_;
};

// lambda_per sum ||E(x_hat)-E(x)||_2 + lambda_sty sum ||G(E(x_hat))-G(E(x))||_1
// per frame; G is the channel Gram matrix normalized by the pixel count.
Tensor perceptual_style_loss(const Tensor& x, const Tensor& x_hat, const FeatureExtractor& fe,
                             const LossWeights& w);

Tensor gram_matrix(const Tensor& feature_frame); // (1,C,H,W) -> (C,C), /(H*W)

// ---- synthetic clips: constant-velocity translation with wraparound ----
enum class PatternKind { Gradient, Checkerboard, NoiseTexture };

struct SyntheticClipSpec {
    PatternKind kind = PatternKind::Gradient;
    int64_t vx = 0, vy = 0; // pixels per frame
    int64_t frames = 5;
    int64_t width = 32, height = 32;
    uint64_t seed = 1;
};

Tensor make_clip(const SyntheticClipSpec& spec); // (T,3,H,W)
std::vector<SyntheticClipSpec> make_synthetic_dataset(int64_t clips, int64_t frames, int64_t size,
                                                      uint64_t seed);

struct TrainLogEntry {
    int64_t step = 0;
    double rd = 0.0;
    double rate_y = 0.0; // bpp
    double rate_z = 0.0;
    double distortion = 0.0;
    double perceptual = 0.0;
    double style = 0.0;
};

struct TrainOptions {
    int64_t steps = 5000;
    double lr = 1e-4;
    double clip_norm = 1.0;
    uint64_t seed = 1;
    LossWeights weights;
    int stage = 1; // stage 2 adds the perceptual and style terms
    std::function<void(const TrainLogEntry&)> on_step;
};

struct TrainResult {
    std::vector<TrainLogEntry> history;
};

class Adam {
public:
    Adam(ParamStore& store, double lr);
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    // clips the global gradient norm first when clip_norm > 0
    void step(double clip_norm);
    void zero_grad();

private:
    ParamStore& store_;
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
    std::vector<Parameter*> order_;
};

TrainResult train_stage(VideoCodec& codec, const std::vector<SyntheticClipSpec>& dataset,
                        const TrainOptions& opts);

std::string format_log_entry(const TrainLogEntry& e);

} // namespace gtem
