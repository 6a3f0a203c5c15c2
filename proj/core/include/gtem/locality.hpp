#pragma once

#include "gtem/ops.hpp"
#include "gtem/param.hpp"
#include "gtem/tensor.hpp"

#include <string>

namespace gtem {

// Each kind is a fixed linear rewrite of a 3x3 depthwise kernel into an
// equivalent vanilla 3x3 kernel, so every branch runs through conv2d and the
// whole block merges into a single kernel for the oracle test.
//
//   Central     sum_i w_i (x_i - x_center) over the whole window
//   Vertical    w[r][c] (x[r][c] - x[r+1][c]) for r in {0,1} (6 pairs)
//   Horizontal  w[r][c] (x[r][c] - x[r][c+1]) for c in {0,1} (6 pairs)
//   Angular     w[k] (x[ring_k] - x[ring_{k+1}]) clockwise over the 8-ring
//   Vanilla     plain convolution
enum class DiffConvKind { Central, Vertical, Horizontal, Angular, Vanilla };

Tensor rewrite_kernel(const Tensor& k, DiffConvKind kind); // (C,1,3,3) -> (C,1,3,3)
Tensor diff_conv(const Tensor& x, const Tensor& k, DiffConvKind kind);

struct HcbWeights {
    Tensor k_central, k_vertical, k_horizontal, k_angular, k_vanilla; // (C,1,3,3)
    Tensor mix_w, mix_b;                                              // 1x1 pointwise

    void init(ParamStore& store, const std::string& prefix, int64_t channels, Rng& rng);
};

// sum of the five rewritten kernels; conv with it equals the branch sum
Tensor hcb_merged_kernel(const HcbWeights& w);
Tensor hcb_branch_sum(const Tensor& x, const HcbWeights& w);
// single conv with an externally supplied merged kernel, same padding path
Tensor hcb_merged_conv(const Tensor& x, const Tensor& merged_kernel);
Tensor hcb(const Tensor& x, const HcbWeights& w);

struct LrffnWeights {
    Tensor in_w, in_b;   // C -> C_exp
    Tensor out_w, out_b; // C_exp/2 -> C
    HcbWeights hcb;

    void init(ParamStore& store, const std::string& prefix, int64_t channels, int64_t expanded,
              Rng& rng);
};

Tensor lrffn(const Tensor& e, const LrffnWeights& w);

} // namespace gtem
