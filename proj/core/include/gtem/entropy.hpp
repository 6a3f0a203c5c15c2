#pragma once

#include "gtem/codec.hpp"
#include "gtem/coder.hpp"
#include "gtem/container.hpp"
#include "gtem/ops.hpp"
#include "gtem/param.hpp"

#include <array>
#include <optional>

namespace gtem {

inline constexpr double kSigmaMin = 0.04;
inline constexpr double kLikelihoodFloor = 1.0 / 65536.0; // 2^-16

enum class QuantizeMode { Infer, TrainRate, TrainDistortion };

// Infer: round, ties away from zero. TrainRate: additive U(-.5,.5) noise.
// TrainDistortion: straight-through rounding (identity gradient).
Tensor quantize(const Tensor& y, QuantizeMode mode, Rng* rng = nullptr);

// P(y) = Phi((y - mu + .5)/sigma) - Phi((y - mu - .5)/sigma), floored at 2^-16.
Tensor gaussian_interval_likelihood(const Tensor& y, const Tensor& mu, const Tensor& sigma);

// -sum log2 P
Tensor bits_from_likelihood(const Tensor& p);

// sigma head mapping: positive, smooth, floored at kSigmaMin
Tensor scale_from_raw(const Tensor& raw);

struct GaussianParams {
    Tensor mu;
    Tensor sigma;
};

struct MotionField {
    Tensor flow; // (1,2,h,w), channel 0 dx, channel 1 dy
};

// Refined latents of the two previous frames; absent entries read as zeros.
struct ConditionBuffer {
    std::optional<Tensor> prev1; // y_bar(t-1)
    std::optional<Tensor> prev2; // y_bar(t-2)

    void reset() {
        prev1.reset();
        prev2.reset();
    }
    void push(Tensor y_bar) {
        prev2 = prev1.has_value() ? prev1 : std::optional<Tensor>(y_bar); // duplicate at t=1
        prev1 = std::move(y_bar);
    }
};

struct EntropyTrainOut {
    Tensor y_refined;     // (T,M,h,w)
    Tensor y_bits;        // scalar, -sum log2 P over all frames/slices
    Tensor z_bits;        // scalar
    std::vector<Tensor> per_frame_y_bits;
    std::vector<Tensor> per_frame_z_bits;
};

struct EntropyEncodeOut {
    Tensor y_refined;
    GopSegments segments;
    double estimated_bits = 0.0; // -sum log2 P at the coded integers
    double estimated_y_bits = 0.0;
    double estimated_z_bits = 0.0;
    std::vector<double> per_frame_bits;
};

// Conditional channel-wise entropy model: hyperprior, five-slice
// autoregression with latent-residual refinement, predictive motion
// alignment, and the condition generation network.
class EntropyModel {
public:
    void init(ParamStore& store, const CodecConfig& cfg, Rng& rng);

    // Training surrogate pass over a whole GOP latent tensor.
    EntropyTrainOut forward_train(const Tensor& y_gop, Rng& noise_rng) const;

    // Inference: codes round(y) and returns the refined latents the decoder
    // will reproduce bit for bit. One range-coder stream per GOP, segmented
    // at slice boundaries.
    EntropyEncodeOut encode_gop(const Tensor& y_gop, bool zero_conditions = false) const;
    Tensor decode_gop(const GopSegments& segments, int64_t frames, int64_t lh, int64_t lw,
                      bool zero_conditions = false) const;

    // exposed pieces (tests drive them directly)
    Tensor hyper_encode(const Tensor& y) const;                    // y (T,M,h,w) -> z
    std::array<Tensor, 2> hyper_decode(const Tensor& z_hat) const; // f_mu, f_sigma at (h,w)
    GaussianParams z_prior(const Shape& z_shape) const;
    MotionField estimate_motion(const Tensor& prev2, const Tensor& prev1) const;
    Tensor rectify(const MotionField& m) const; // alpha (x) flow (+) beta
    Tensor generate_condition(const Tensor& y_warp, const Tensor& prev2, const Tensor& prev1) const;

    struct SlicePass {
        std::array<GaussianParams, 5> params;
        std::array<Tensor, 5> residual;
        Tensor y_refined; // concatenated slices
    };
    // Runs all five slices given the quantized latent of one frame. Identical
    // on encoder and decoder by construction: inputs are f features, the
    // refined slice prefix, and the condition tensor only.
    SlicePass slice_pass(const Tensor& y_hat_frame, const Tensor& f_mu, const Tensor& f_sigma,
                         const Tensor& condition) const;

    // condition for frame t given the buffer state (zeros when absent)
    Tensor frame_condition(const ConditionBuffer& buf, int64_t lh, int64_t lw,
                           bool zero_conditions) const;

    const CodecConfig& config() const { return cfg_; }

private:
    struct SliceHead {
        Tensor w1, b1, w2, b2; // two 3x3 convs
    };
    struct SliceNet {
        SliceHead mu, sigma, res;
    };
    struct ResBlock {
        Tensor w1, b1, w2, b2;
    };
    struct WindowAttention {
        Tensor ln_g, ln_b;
        Tensor wq, wk, wv, wo;
    };

    Tensor resblock(const ResBlock& rb, const Tensor& x) const;
    Tensor window_attention(const WindowAttention& wa, const Tensor& x) const;
    Tensor run_head(const SliceHead& h, const Tensor& in) const;
    Tensor slice_input(const Tensor& f_mu, const Tensor& f_sigma,
                       const std::vector<Tensor>& refined_prefix, const Tensor& condition) const;

    CodecConfig cfg_;

    // hyperprior
    Tensor ha_k1, ha_b1, ha_k2, ha_b2;
    Tensor hs_k1, hs_b1, hs_k2, hs_b2;
    Tensor zp_mu, zp_raw_sigma; // factorized prior, per channel

    // predictive motion alignment
    Tensor me_in_k, me_in_b;
    std::vector<ResBlock> me_blocks;
    Tensor me_out_k, me_out_b; // zero-initialized
    Tensor alpha, beta;        // (2, grid, grid), resized to the latent grid

    // condition generation network
    Tensor cgn_in_k, cgn_in_b;
    std::vector<ResBlock> cgn_res;
    std::vector<WindowAttention> cgn_attn;
    Tensor cgn_out_k, cgn_out_b;

    std::array<SliceNet, 5> slices_;
};

} // namespace gtem
