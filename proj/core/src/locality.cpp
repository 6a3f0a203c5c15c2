#include "gtem/locality.hpp"

#include <stdexcept>

namespace gtem {

using detail::attach;
using detail::check;
using detail::grad_buf;
using detail::make_tensor;
using detail::wants_grad;

namespace {

// 9x9 rewrite matrices, row-major over kernel positions (r*3+c).
// out[i] = sum_j M[i][j] * in[j]
struct Rewrite {
    double m[9][9] = {};
};

Rewrite identity_rewrite() {
    Rewrite r;
    for (int i = 0; i < 9; ++i) r.m[i][i] = 1.0;
    return r;
}

Rewrite central_rewrite() {
    // w'_i = w_i, w'_center = w_center - sum_j w_j
    Rewrite r = identity_rewrite();
    for (int j = 0; j < 9; ++j) r.m[4][j] -= 1.0;
    return r;
}

Rewrite vertical_rewrite() {
    // y = sum_{r<2,c} w[r][c] (x[r][c] - x[r+1][c]); bottom row entries inert
    Rewrite r;
    for (int row = 0; row < 2; ++row)
        for (int col = 0; col < 3; ++col) {
            int i = row * 3 + col;
            r.m[i][i] += 1.0;
            r.m[(row + 1) * 3 + col][i] -= 1.0;
        }
    return r;
}

Rewrite horizontal_rewrite() {
    Rewrite r;
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 2; ++col) {
            int i = row * 3 + col;
            r.m[i][i] += 1.0;
            r.m[row * 3 + col + 1][i] -= 1.0;
        }
    return r;
}

Rewrite angular_rewrite() {
    // clockwise ring, center unused: w'_k = w_k - w_{k-1}
    static const int ring[8] = {0, 1, 2, 5, 8, 7, 6, 3};
    Rewrite r;
    for (int k = 0; k < 8; ++k) {
        int cur = ring[k];
        int nxt = ring[(k + 1) % 8];
        r.m[cur][cur] += 1.0;
        r.m[nxt][cur] -= 1.0;
    }
    return r;
}

const Rewrite& rewrite_matrix(DiffConvKind kind) {
    static const Rewrite central = central_rewrite();
    static const Rewrite vertical = vertical_rewrite();
    static const Rewrite horizontal = horizontal_rewrite();
    static const Rewrite angular = angular_rewrite();
    static const Rewrite vanilla = identity_rewrite();
    switch (kind) {
        case DiffConvKind::Central: return central;
        case DiffConvKind::Vertical: return vertical;
        case DiffConvKind::Horizontal: return horizontal;
        case DiffConvKind::Angular: return angular;
        case DiffConvKind::Vanilla: return vanilla;
    }
    throw std::invalid_argument("diff_conv: bad kind");
}

} // namespace

Tensor rewrite_kernel(const Tensor& k, DiffConvKind kind) {
    check(k.rank() == 4 && k.dim(1) == 1 && k.dim(2) == 3 && k.dim(3) == 3,
          "rewrite_kernel: kernel must be (C,1,3,3)");
    const Rewrite& rw = rewrite_matrix(kind);
    const int64_t c = k.dim(0);
    std::vector<double> v(static_cast<size_t>(c * 9), 0.0);
    const double* kd = k.data().data();
    for (int64_t ch = 0; ch < c; ++ch) {
        const double* in = kd + ch * 9;
        double* out = v.data() + ch * 9;
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) out[i] += rw.m[i][j] * in[j];
    }
    Tensor out = make_tensor({c, 1, 3, 3}, std::move(v));
    if (wants_grad({&k})) {
        Node* kn = k.node.get();
        const Rewrite* rp = &rw;
        attach(out, {k.node}, [kn, rp, c](const Node& o) {
            auto& g = grad_buf(*kn);
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* go = o.grad.data() + ch * 9;
                double* gi = g.data() + ch * 9;
                for (int i = 0; i < 9; ++i)
                    for (int j = 0; j < 9; ++j) gi[j] += rp->m[i][j] * go[i];
            }
        });
    }
    return out;
}

// Replicate padding keeps every sampled pair equal on constant inputs, so the
// difference branches vanish at the borders too.
Tensor diff_conv(const Tensor& x, const Tensor& k, DiffConvKind kind) {
    return conv2d(replicate_pad2d(x, 1), rewrite_kernel(k, kind),
                  {.stride = 1, .pad = 0, .depthwise = true});
}

void HcbWeights::init(ParamStore& store, const std::string& prefix, int64_t channels, Rng& rng) {
    k_central = store.add(prefix + ".k_central", init_uniform_fan({channels, 1, 3, 3}, 9, rng)).value;
    k_vertical = store.add(prefix + ".k_vertical", init_uniform_fan({channels, 1, 3, 3}, 9, rng)).value;
    k_horizontal =
        store.add(prefix + ".k_horizontal", init_uniform_fan({channels, 1, 3, 3}, 9, rng)).value;
    k_angular = store.add(prefix + ".k_angular", init_uniform_fan({channels, 1, 3, 3}, 9, rng)).value;
    k_vanilla = store.add(prefix + ".k_vanilla", init_uniform_fan({channels, 1, 3, 3}, 9, rng)).value;
    mix_w = store.add(prefix + ".mix_w",
                      init_uniform_fan({channels, channels, 1, 1}, channels, rng)).value;
    mix_b = store.add(prefix + ".mix_b", init_zeros({channels})).value;
}

Tensor hcb_merged_kernel(const HcbWeights& w) {
    Tensor m = rewrite_kernel(w.k_central, DiffConvKind::Central);
    m = add(m, rewrite_kernel(w.k_vertical, DiffConvKind::Vertical));
    m = add(m, rewrite_kernel(w.k_horizontal, DiffConvKind::Horizontal));
    m = add(m, rewrite_kernel(w.k_angular, DiffConvKind::Angular));
    m = add(m, rewrite_kernel(w.k_vanilla, DiffConvKind::Vanilla));
    return m;
}

Tensor hcb_branch_sum(const Tensor& x, const HcbWeights& w) {
    Tensor y = diff_conv(x, w.k_central, DiffConvKind::Central);
    y = add(y, diff_conv(x, w.k_vertical, DiffConvKind::Vertical));
    y = add(y, diff_conv(x, w.k_horizontal, DiffConvKind::Horizontal));
    y = add(y, diff_conv(x, w.k_angular, DiffConvKind::Angular));
    y = add(y, diff_conv(x, w.k_vanilla, DiffConvKind::Vanilla));
    return y;
}

Tensor hcb_merged_conv(const Tensor& x, const Tensor& merged_kernel) {
    return conv2d(replicate_pad2d(x, 1), merged_kernel, {.stride = 1, .pad = 0, .depthwise = true});
}

Tensor hcb(const Tensor& x, const HcbWeights& w) {
    Tensor merged = hcb_branch_sum(x, w);
    return conv2d(merged, w.mix_w, {.stride = 1, .pad = 0, .depthwise = false}, w.mix_b);
}

void LrffnWeights::init(ParamStore& store, const std::string& prefix, int64_t channels,
                        int64_t expanded, Rng& rng) {
    if (expanded % 2 != 0) throw std::invalid_argument("lrffn: expanded width must be even");
    in_w = store.add(prefix + ".in_w", init_uniform_fan({channels, expanded}, channels, rng)).value;
    in_b = store.add(prefix + ".in_b", init_zeros({expanded})).value;
    out_w = store.add(prefix + ".out_w",
                      init_uniform_fan({expanded / 2, channels}, expanded / 2, rng)).value;
    out_b = store.add(prefix + ".out_b", init_zeros({channels})).value;
    hcb.init(store, prefix + ".hcb", expanded / 2, rng);
}

namespace {

Tensor linear_channels4(const Tensor& x, const Tensor& w, const Tensor& b) {
    const Shape& s = x.shape();
    Tensor p = permute(x, {0, 2, 3, 1});
    Tensor y = linear(p, w, b);
    return permute(reshape(y, {s[0], s[2], s[3], y.shape().back()}), {0, 3, 1, 2});
}

} // namespace

Tensor lrffn(const Tensor& e, const LrffnWeights& w) {
    check(e.rank() == 4, "lrffn: feature must be rank 4");
    Tensor expanded = gelu(linear_channels4(e, w.in_w, w.in_b));
    auto halves = split_channels(expanded, 2);
    Tensor local = gelu(hcb(halves[0], w.hcb));
    Tensor gated = mul(local, halves[1]);
    return linear_channels4(gated, w.out_w, w.out_b);
}

} // namespace gtem
