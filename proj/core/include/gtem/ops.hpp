#pragma once

#include "gtem/tensor.hpp"

namespace gtem {

// Affine map over the last dimension: x (..., K) x w (K, K') + b (K').
// Pass an undefined Tensor as b to skip the bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b); // (m,k) x (k,n)

struct Conv2dOpts {
    int64_t stride = 1;
    int64_t pad = 0;
    bool depthwise = false;
};

// Cross-correlation with zero padding. x (N,Cin,H,W); dense kernel
// (Cout,Cin,kh,kw) or depthwise (C,1,kh,kw). Kernel must be odd-sized.
Tensor conv2d(const Tensor& x, const Tensor& k, const Conv2dOpts& opts,
              const Tensor& bias = Tensor());

// Normalization over the channel axis (axis 1), per remaining position.
Tensor layernorm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor erf(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);
Tensor clamp01(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);

// Rounding, ties away from zero. round_ste carries the identity gradient
// surrogate; plain_round refuses to participate in a recording graph.
Tensor round_ste(const Tensor& x);
Tensor plain_round(const Tensor& x);

// x + noise with unit gradient to x; noise values come from the caller.
Tensor add_constant(const Tensor& x, const std::vector<double>& noise);

Tensor add_channel_bias(const Tensor& x, const Tensor& b); // b (C) over (N,C,H,W)

Tensor nearest_upsample2(const Tensor& x);
Tensor nearest_resize(const Tensor& x, int64_t oh, int64_t ow);
Tensor zero_pad2d(const Tensor& x, int64_t top, int64_t bottom, int64_t left, int64_t right);
Tensor replicate_pad2d(const Tensor& x, int64_t pad);

// Backward bilinear warp: out(p) = sample(feature, p + flow(p)), border
// clamped. feature (N,C,H,W), flow (N,2,H,W) with channel 0 = dx, 1 = dy.
Tensor warp_bilinear(const Tensor& feature, const Tensor& flow);

} // namespace gtem
