#include "gtem/trainer.hpp"

#include "gtem/ops.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gtem {

using detail::check;

Tensor rd_loss(const Tensor& x, const Tensor& x_hat, const Tensor& y_bits, const Tensor& z_bits,
               double lambda) {
    check(x.shape() == x_hat.shape(), "rd_loss: shape mismatch");
    check(x.rank() == 4, "rd_loss: frames must be (T,C,H,W)");
    const double pixels_per_frame = static_cast<double>(x.dim(2) * x.dim(3));
    Tensor rate = mul_scalar(add(y_bits, z_bits), 1.0 / pixels_per_frame);
    // sum over frames of per-frame MSE == total squared error / (C*H*W)
    Tensor err = sub(x_hat, x);
    Tensor sq = sum(mul(err, err));
    Tensor dist = mul_scalar(sq, 1.0 / (static_cast<double>(x.dim(1)) * pixels_per_frame));
    return add(rate, mul_scalar(dist, lambda));
}

FeatureExtractor::FeatureExtractor(uint64_t seed) {
    Rng rng(seed);
    const int64_t widths[4] = {3, 8, 16, 32};
    for (int s = 0; s < 3; ++s) {
        kernels_[static_cast<size_t>(s)] =
            init_uniform_fan({widths[s + 1], widths[s], 3, 3}, widths[s] * 9, rng);
        std::vector<double> b(static_cast<size_t>(widths[s + 1]));
        for (auto& v : b) v = rng.uniform(-0.1, 0.1);
        biases_[static_cast<size_t>(s)] = Tensor::from({widths[s + 1]}, std::move(b));
    }
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& frames) const {
    check(frames.rank() == 4 && frames.dim(1) == 3, "features: input must be (T,3,H,W)");
    std::vector<Tensor> out;
    Tensor h = frames;
    for (int s = 0; s < 3; ++s) {
        h = conv2d(h, kernels_[static_cast<size_t>(s)], {.stride = 2, .pad = 1, .depthwise = false},
                   biases_[static_cast<size_t>(s)]);
        h = gelu(h);
        out.push_back(h);
    }
    return out;
}

Tensor gram_matrix(const Tensor& feature_frame) {
    check(feature_frame.rank() == 4 && feature_frame.dim(0) == 1,
          "gram_matrix: one frame at a time");
    const int64_t c = feature_frame.dim(1);
    const int64_t n = feature_frame.dim(2) * feature_frame.dim(3);
    Tensor flat = reshape(feature_frame, {c, n});
    return mul_scalar(matmul(flat, permute(flat, {1, 0})), 1.0 / static_cast<double>(n));
}

Tensor perceptual_style_loss(const Tensor& x, const Tensor& x_hat, const FeatureExtractor& fe,
                             const LossWeights& w) {
    check(x.shape() == x_hat.shape(), "perceptual_style_loss: shape mismatch");
    auto fx = fe.features(x);
    auto fy = fe.features(x_hat);
    const int64_t frames = x.dim(0);
    Tensor per = Tensor::scalar(0.0);
    Tensor sty = Tensor::scalar(0.0);
    for (size_t s = 0; s < fx.size(); ++s) {
        for (int64_t t = 0; t < frames; ++t) {
            Tensor a = narrow(fx[s], 0, t, 1);
            Tensor b = narrow(fy[s], 0, t, 1);
            Tensor diff = sub(b, a);
            per = add(per, sqrt(sum(mul(diff, diff))));
            Tensor gd = sub(gram_matrix(b), gram_matrix(a));
            sty = add(sty, sum(abs(gd)));
        }
    }
    return add(mul_scalar(per, w.lambda_per), mul_scalar(sty, w.lambda_sty));
}

// ---------------------------------------------------------------------------
// synthetic clips

namespace {

std::vector<double> base_pattern(const SyntheticClipSpec& spec) {
    Rng rng(spec.seed);
    const int64_t h = spec.height, w = spec.width;
    std::vector<double> img(static_cast<size_t>(3 * h * w), 0.0);
    switch (spec.kind) {
        case PatternKind::Gradient: {
            double theta = rng.uniform(0.0, 6.283185307179586);
            double cx = std::cos(theta), sy = std::sin(theta);
            for (int64_t c = 0; c < 3; ++c) {
                double lo = rng.uniform(0.05, 0.45), hi = rng.uniform(0.55, 0.95);
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        double u = (cx * x / (w - 1.0) + sy * y / (h - 1.0) + 1.0) * 0.5;
                        img[static_cast<size_t>((c * h + y) * w + x)] = lo + (hi - lo) * u;
                    }
            }
            break;
        }
        case PatternKind::Checkerboard: {
            int64_t block = 4 + static_cast<int64_t>(rng.below(2)) * 4; // 4 or 8
            double ca[3], cb[3];
            for (int i = 0; i < 3; ++i) {
                ca[i] = rng.uniform(0.0, 0.5);
                cb[i] = rng.uniform(0.5, 1.0);
            }
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        bool odd = ((x / block) + (y / block)) % 2;
                        img[static_cast<size_t>((c * h + y) * w + x)] = odd ? ca[c] : cb[c];
                    }
            break;
        }
        case PatternKind::NoiseTexture: {
            std::vector<double> noise(static_cast<size_t>(h * w));
            for (auto& v : noise) v = rng.uniform();
            // two 3x3 box blurs with wraparound keep the texture tileable
            for (int pass = 0; pass < 2; ++pass) {
                std::vector<double> sm(noise.size());
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        double acc = 0.0;
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                int64_t yy = (y + dy + h) % h;
                                int64_t xx = (x + dx + w) % w;
                                acc += noise[static_cast<size_t>(yy * w + xx)];
                            }
                        sm[static_cast<size_t>(y * w + x)] = acc / 9.0;
                    }
                noise.swap(sm);
            }
            double tint[3] = {rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0)};
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t i = 0; i < h * w; ++i)
                    img[static_cast<size_t>(c * h * w + i)] =
                        0.15 + 0.7 * tint[c] * noise[static_cast<size_t>(i)];
            break;
        }
    }
    return img;
}

} // namespace

Tensor make_clip(const SyntheticClipSpec& spec) {
    check(spec.frames >= 1, "make_clip: need at least one frame");
    const int64_t h = spec.height, w = spec.width;
    auto base = base_pattern(spec);
    std::vector<double> all(static_cast<size_t>(spec.frames * 3 * h * w));
    for (int64_t t = 0; t < spec.frames; ++t) {
        int64_t sx = ((t * spec.vx) % w + w) % w;
        int64_t sy = ((t * spec.vy) % h + h) % h;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    int64_t py = (y - sy + h) % h;
                    int64_t px = (x - sx + w) % w;
                    all[static_cast<size_t>(((t * 3 + c) * h + y) * w + x)] =
                        base[static_cast<size_t>((c * h + py) * w + px)];
                }
    }
    return Tensor::from({spec.frames, 3, h, w}, std::move(all));
}

std::vector<SyntheticClipSpec> make_synthetic_dataset(int64_t clips, int64_t frames, int64_t size,
                                                      uint64_t seed) {
    Rng rng(seed);
    std::vector<SyntheticClipSpec> specs;
    const PatternKind kinds[3] = {PatternKind::Gradient, PatternKind::Checkerboard,
                                  PatternKind::NoiseTexture};
    for (int64_t i = 0; i < clips; ++i) {
        SyntheticClipSpec s;
        s.kind = kinds[rng.below(3)];
        s.vx = static_cast<int64_t>(rng.below(5)) - 2;
        s.vy = static_cast<int64_t>(rng.below(5)) - 2;
        s.frames = frames;
        s.width = size;
        s.height = size;
        s.seed = rng.next_u64();
        specs.push_back(s);
    }
    return specs;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParamStore& store, double lr) : store_(store), lr_(lr) {
    for (Parameter* p : store_.sorted())
        if (p->trainable) order_.push_back(p);
    m_.resize(order_.size());
    v_.resize(order_.size());
    for (size_t i = 0; i < order_.size(); ++i) {
        m_[i].assign(static_cast<size_t>(order_[i]->value.numel()), 0.0);
        v_[i].assign(static_cast<size_t>(order_[i]->value.numel()), 0.0);
    }
}

void Adam::zero_grad() { store_.zero_grad(); }

void Adam::step(double clip_norm) {
    double scale = 1.0;
    if (clip_norm > 0.0) {
        double sq = 0.0;
        for (Parameter* p : order_) {
            if (!p->value.has_grad()) continue;
            for (double g : p->value.grad()) sq += g * g;
        }
        double norm = std::sqrt(sq);
        if (norm > clip_norm) scale = clip_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < order_.size(); ++i) {
        Parameter* p = order_[i];
        if (!p->value.has_grad()) continue;
        auto val = p->value.raw();
        auto g = p->value.grad();
        for (size_t k = 0; k < g.size(); ++k) {
            double gv = g[k] * scale;
            m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gv;
            v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gv * gv;
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            val[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

TrainResult train_stage(VideoCodec& codec, const std::vector<SyntheticClipSpec>& dataset,
                        const TrainOptions& opts) {
    check(!dataset.empty(), "train: empty dataset");
    check(opts.stage == 1 || opts.stage == 2, "train: stage must be 1 or 2");

    Adam adam(codec.params(), opts.lr);
    Rng pick_rng(opts.seed);
    Rng noise_rng(opts.seed + 0x9E3779B97F4A7C15ull);
    FeatureExtractor fe; // fixed seed, frozen

    // stage 2 halves the rate at 90% and 96% of the step budget
    const int64_t drop1 = (opts.steps * 9 + 9) / 10;
    const int64_t drop2 = (opts.steps * 24 + 24) / 25;

    TrainResult result;
    for (int64_t step = 0; step < opts.steps; ++step) {
        if (opts.stage == 2) {
            double lr = opts.lr;
            if (step >= drop2) lr = opts.lr * 0.25;
            else if (step >= drop1) lr = opts.lr * 0.5;
            adam.set_lr(lr);
        }
        const SyntheticClipSpec& spec = dataset[pick_rng.below(dataset.size())];
        Tensor x = make_clip(spec);
        TrainForwardOut fwd = codec.train_forward(x, noise_rng);

        Tensor loss = rd_loss(x, fwd.x_hat, fwd.y_bits, fwd.z_bits, opts.weights.lambda);
        TrainLogEntry e;
        e.step = step;
        const double pixels = static_cast<double>(x.dim(2) * x.dim(3));
        e.rate_y = fwd.y_bits.item() / (pixels * static_cast<double>(x.dim(0)));
        e.rate_z = fwd.z_bits.item() / (pixels * static_cast<double>(x.dim(0)));
        {
            double sq = 0.0;
            auto a = x.data();
            auto b = fwd.x_hat.data();
            for (size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
            e.distortion = sq / static_cast<double>(a.size());
        }
        if (opts.stage == 2) {
            loss = add(loss, perceptual_style_loss(x, fwd.x_hat, fe, opts.weights));
            // split the two terms once more for the log
            LossWeights wp = opts.weights;
            wp.lambda_sty = 0.0;
            LossWeights ws = opts.weights;
            ws.lambda_per = 0.0;
            NoGradGuard ng;
            e.perceptual = perceptual_style_loss(x, fwd.x_hat.detach(), fe, wp).item();
            e.style = perceptual_style_loss(x, fwd.x_hat.detach(), fe, ws).item();
        }
        e.rd = loss.item();
        if (!std::isfinite(e.rd))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     " (rate_y " + std::to_string(e.rate_y) + ", distortion " +
                                     std::to_string(e.distortion) + ")");
        adam.zero_grad();
        backward(loss);
        adam.step(opts.clip_norm);

        result.history.push_back(e);
        if (opts.on_step) opts.on_step(e);
    }
    return result;
}

std::string format_log_entry(const TrainLogEntry& e) {
    std::ostringstream os;
    os << e.step << " " << e.rd << " " << e.rate_y << " " << e.rate_z << " " << e.distortion
       << " " << e.perceptual << " " << e.style;
    return os.str();
}

} // namespace gtem
