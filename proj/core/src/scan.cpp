#include "gtem/scan.hpp"

#include <cmath>
#include <stdexcept>

namespace gtem {

using detail::attach;
using detail::check;
using detail::check_finite;
using detail::grad_buf;
using detail::make_tensor;
using detail::wants_grad;

const char* scan_order_name(ScanOrder k) {
    switch (k) {
        case ScanOrder::FST: return "FST";
        case ScanOrder::BST: return "BST";
        case ScanOrder::FTS: return "FTS";
        case ScanOrder::BTS: return "BTS";
    }
    return "?";
}

namespace {

// (T,C,H,W) -> (H*W, C, T, 1): spatial positions become the frame axis.
Tensor transpose_roles(const Tensor& x) {
    const Shape& s = x.shape();
    Tensor r = reshape(x, {s[0], s[1], s[2] * s[3]});   // (T,C,S)
    Tensor p = permute(r, {2, 1, 0});                   // (S,C,T)
    return reshape(p, {s[2] * s[3], s[1], s[0], 1});
}

Tensor transpose_roles_back(const Tensor& y, const Shape& original) {
    Tensor r = reshape(y, {y.shape()[0], y.shape()[1], y.shape()[2]}); // (S,C,T)
    Tensor p = permute(r, {2, 1, 0});                                  // (T,C,S)
    return reshape(p, original);
}

} // namespace

Tensor apply_transform(const Tensor& x, ScanOrder order) {
    check(x.rank() == 4, "apply_transform: feature must be (T,C,H,W)");
    switch (order) {
        case ScanOrder::FST: return reshape(x, x.shape()); // identity (fresh node)
        case ScanOrder::BST: return flip(x, {0, 2, 3});
        case ScanOrder::FTS: return transpose_roles(x);
        case ScanOrder::BTS: return flip(transpose_roles(x), {0, 2, 3});
    }
    throw std::invalid_argument("apply_transform: bad order");
}

Tensor inverse_transform(const Tensor& y, ScanOrder order, const Shape& original) {
    check(y.rank() == 4, "inverse_transform: feature must be rank 4");
    switch (order) {
        case ScanOrder::FST: return reshape(y, original);
        case ScanOrder::BST: return reshape(flip(y, {0, 2, 3}), original);
        case ScanOrder::FTS: return transpose_roles_back(y, original);
        case ScanOrder::BTS: return transpose_roles_back(flip(y, {0, 2, 3}), original);
    }
    throw std::invalid_argument("inverse_transform: bad order");
}

std::vector<std::array<int64_t, 3>> scan_index_order(ScanOrder order, int64_t t, int64_t h,
                                                     int64_t w) {
    std::vector<std::array<int64_t, 3>> seq;
    seq.reserve(static_cast<size_t>(t * h * w));
    if (order == ScanOrder::FST || order == ScanOrder::BST) {
        for (int64_t f = 0; f < t; ++f)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) seq.push_back({f, y, x});
    } else {
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t f = 0; f < t; ++f) seq.push_back({f, y, x});
    }
    if (order == ScanOrder::BST || order == ScanOrder::BTS)
        std::reverse(seq.begin(), seq.end());
    return seq;
}

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& b, const Tensor& c,
                      const Tensor& a, const Tensor& d) {
    check(u.rank() == 2, "selective_scan: u must be (L,C)");
    const int64_t l = u.dim(0), ch = u.dim(1);
    check(l >= 1, "selective_scan: sequence length must be >= 1");
    check(delta.shape() == u.shape(), "selective_scan: delta shape mismatch");
    check(b.rank() == 2 && b.dim(0) == l, "selective_scan: B shape mismatch");
    const int64_t ns = b.dim(1);
    check(c.rank() == 2 && c.dim(0) == l && c.dim(1) == ns, "selective_scan: C shape mismatch");
    check(a.rank() == 2 && a.dim(0) == ch && a.dim(1) == ns, "selective_scan: A shape mismatch");
    check(d.rank() == 1 && d.dim(0) == ch, "selective_scan: D shape mismatch");

    const double* ud = u.data().data();
    const double* dd = delta.data().data();
    const double* bd = b.data().data();
    const double* cd = c.data().data();
    const double* ad = a.data().data();
    const double* sd = d.data().data();

    const size_t cache_n = static_cast<size_t>(l * ch * ns);
    std::vector<double> abar(cache_n);   // exp(delta A), reused by backward
    std::vector<double> hist(cache_n);   // h after each step
    std::vector<double> y(static_cast<size_t>(l * ch), 0.0);
    std::vector<double> h(static_cast<size_t>(ch * ns), 0.0);

    for (int64_t t = 0; t < l; ++t) {
        const double* bt = bd + t * ns;
        const double* ct = cd + t * ns;
        for (int64_t cc = 0; cc < ch; ++cc) {
            const double dt = dd[t * ch + cc];
            const double ut = ud[t * ch + cc];
            const double dbu = dt * ut;
            double* hc = h.data() + cc * ns;
            double* ab = abar.data() + (t * ch + cc) * ns;
            double* hs = hist.data() + (t * ch + cc) * ns;
            const double* ac = ad + cc * ns;
            double acc = 0.0;
            for (int64_t n = 0; n < ns; ++n) {
                double e = std::exp(dt * ac[n]);
                ab[n] = e;
                double hv = e * hc[n] + dbu * bt[n];
                hc[n] = hv;
                hs[n] = hv;
                acc += ct[n] * hv;
            }
            y[static_cast<size_t>(t * ch + cc)] = acc + sd[cc] * ut;
        }
    }
    Tensor out = make_tensor({l, ch}, std::move(y));

    if (wants_grad({&u, &delta, &b, &c, &a, &d})) {
        Node* un = u.node.get();
        Node* dn = delta.node.get();
        Node* bn = b.node.get();
        Node* cn = c.node.get();
        Node* an = a.node.get();
        Node* sn = d.node.get();
        attach(out, {u.node, delta.node, b.node, c.node, a.node, d.node},
               [un, dn, bn, cn, an, sn, l, ch, ns, abar = std::move(abar),
                hist = std::move(hist)](const Node& o) {
                   double* gu = un->requires_grad ? grad_buf(*un).data() : nullptr;
                   double* gd = dn->requires_grad ? grad_buf(*dn).data() : nullptr;
                   double* gb = bn->requires_grad ? grad_buf(*bn).data() : nullptr;
                   double* gc = cn->requires_grad ? grad_buf(*cn).data() : nullptr;
                   double* ga = an->requires_grad ? grad_buf(*an).data() : nullptr;
                   double* gs = sn->requires_grad ? grad_buf(*sn).data() : nullptr;
                   const double* ud = un->value.data();
                   const double* dd = dn->value.data();
                   const double* bd = bn->value.data();
                   const double* cd = cn->value.data();
                   const double* ad = an->value.data();
                   const double* sd = sn->value.data();

                   std::vector<double> dh(static_cast<size_t>(ch * ns), 0.0);
                   for (int64_t t = l - 1; t >= 0; --t) {
                       const double* bt = bd + t * ns;
                       const double* ct = cd + t * ns;
                       for (int64_t cc = 0; cc < ch; ++cc) {
                           const double gy = o.grad[static_cast<size_t>(t * ch + cc)];
                           const double dt = dd[t * ch + cc];
                           const double ut = ud[t * ch + cc];
                           double* dhc = dh.data() + cc * ns;
                           const double* hs = hist.data() + (t * ch + cc) * ns;
                           const double* hp =
                               t > 0 ? hist.data() + ((t - 1) * ch + cc) * ns : nullptr;
                           const double* ab = abar.data() + (t * ch + cc) * ns;
                           const double* ac = ad + cc * ns;

                           if (gy != 0.0) {
                               if (gs) gs[cc] += gy * ut;
                               if (gu) gu[t * ch + cc] += sd[cc] * gy;
                           }
                           double ddt = 0.0, dut = 0.0;
                           for (int64_t n = 0; n < ns; ++n) {
                               double dhv = dhc[n] + gy * ct[n];
                               if (gc) gc[t * ns + n] += gy * hs[n];
                               double hprev = hp ? hp[n] : 0.0;
                               double dab = dhv * hprev;
                               if (ga) ga[cc * ns + n] += dab * ab[n] * dt;
                               ddt += dab * ab[n] * ac[n] + dhv * bt[n] * ut;
                               if (gb) gb[t * ns + n] += dhv * dt * ut;
                               dut += dhv * dt * bt[n];
                               dhc[n] = dhv * ab[n]; // carry to t-1
                           }
                           if (gd) gd[t * ch + cc] += ddt;
                           if (gu) gu[t * ch + cc] += dut;
                       }
                   }
               });
    }
    check_finite(out, "selective_scan");
    return out;
}

void SsmParams::init(ParamStore& store, const std::string& prefix, int64_t channels,
                     int64_t state_dim_in, Rng& rng) {
    state_dim = state_dim_in;
    std::vector<double> alog(static_cast<size_t>(channels * state_dim));
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t n = 0; n < state_dim; ++n)
            alog[static_cast<size_t>(c * state_dim + n)] = std::log(static_cast<double>(n + 1));
    a_log = store.add(prefix + ".a_log", Tensor::from({channels, state_dim}, std::move(alog))).value;

    dt_w = store.add(prefix + ".dt_w", init_uniform_fan({channels, channels}, channels, rng)).value;
    // bias chosen so softplus lands in [1e-3, 0.1]
    std::vector<double> dtb(static_cast<size_t>(channels));
    for (auto& v : dtb) {
        double dt = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
        v = std::log(std::expm1(dt));
    }
    dt_b = store.add(prefix + ".dt_b", Tensor::from({channels}, std::move(dtb))).value;

    b_w = store.add(prefix + ".b_w", init_uniform_fan({channels, state_dim}, channels, rng)).value;
    b_b = store.add(prefix + ".b_b", init_zeros({state_dim})).value;
    c_w = store.add(prefix + ".c_w", init_uniform_fan({channels, state_dim}, channels, rng)).value;
    c_b = store.add(prefix + ".c_b", init_zeros({state_dim})).value;
    d = store.add(prefix + ".d", init_ones({channels})).value;
}

Tensor SsmParams::run(const Tensor& seq) const {
    Tensor delta = softplus(linear(seq, dt_w, dt_b));
    Tensor bm = linear(seq, b_w, b_b);
    Tensor cm = linear(seq, c_w, c_b);
    Tensor a = neg(exp(a_log));
    return selective_scan(seq, delta, bm, cm, a, d);
}

void GtmbWeights::init(ParamStore& store, const std::string& prefix, int64_t channels,
                       int64_t state_dim, Rng& rng) {
    if (channels % 2 != 0)
        throw std::invalid_argument("gtmb: channel count must be even for the split");
    const int64_t half = channels / 2;
    in_w = store.add(prefix + ".in_w", init_uniform_fan({channels, channels}, channels, rng)).value;
    in_b = store.add(prefix + ".in_b", init_zeros({channels})).value;
    dw_k = store.add(prefix + ".dw_k", init_uniform_fan({half, 1, 3, 3}, 9, rng)).value;
    dw_b = store.add(prefix + ".dw_b", init_zeros({half})).value;
    ln_g = store.add(prefix + ".ln_g", init_ones({half})).value;
    ln_b = store.add(prefix + ".ln_b", init_zeros({half})).value;
    out_w = store.add(prefix + ".out_w", init_uniform_fan({half, channels}, half, rng)).value;
    out_b = store.add(prefix + ".out_b", init_zeros({channels})).value;
    ssm.init(store, prefix + ".ssm", half, state_dim, rng);
}

namespace {

// (T,C,H,W) -> scan sequence (T*H*W, C), frame-major raster order
Tensor to_sequence(const Tensor& x) {
    const Shape& s = x.shape();
    Tensor p = permute(x, {0, 2, 3, 1});
    return reshape(p, {s[0] * s[2] * s[3], s[1]});
}

Tensor from_sequence(const Tensor& seq, const Shape& feat_shape) {
    Tensor r = reshape(seq, {feat_shape[0], feat_shape[2], feat_shape[3], feat_shape[1]});
    return permute(r, {0, 3, 1, 2});
}

// channel-mixing linear on (T,C,H,W)
Tensor linear_channels(const Tensor& x, const Tensor& w, const Tensor& b) {
    const Shape& s = x.shape();
    Tensor p = permute(x, {0, 2, 3, 1});
    Tensor y = linear(p, w, b);
    Shape os = {s[0], s[2], s[3], y.shape().back()};
    return permute(reshape(y, os), {0, 3, 1, 2});
}

} // namespace

Tensor gtmb_core(const Tensor& xt, const GtmbWeights& w) {
    check(xt.rank() == 4, "gtmb: feature must be rank 4");
    check(xt.dim(1) % 2 == 0, "gtmb: odd channel count");
    Tensor proj = linear_channels(xt, w.in_w, w.in_b);
    auto halves = split_channels(proj, 2);
    Tensor x1 = halves[0];
    Tensor x2 = halves[1];

    Shape half_shape = xt.shape();
    half_shape[1] /= 2;
    Tensor conv = conv2d(x1, w.dw_k, {.stride = 1, .pad = 1, .depthwise = true}, w.dw_b);
    Tensor act = silu(conv);
    Tensor seq = to_sequence(act);
    Tensor scanned = w.ssm.run(seq);
    Tensor x1bar = layernorm_channels(from_sequence(scanned, half_shape), w.ln_g, w.ln_b, 1e-6);

    Tensor gated = mul(x1bar, silu(x2));
    return linear_channels(gated, w.out_w, w.out_b);
}

Tensor gtmb(const Tensor& x, ScanOrder order, const GtmbWeights& w) {
    Tensor xt = apply_transform(x, order);
    Tensor yt = gtmb_core(xt, w);
    return inverse_transform(yt, order, x.shape());
}

void CmmWeights::init(ParamStore& store, const std::string& prefix, int64_t channels,
                      int64_t state_dim, Rng& rng) {
    fst.init(store, prefix + ".fst", channels, state_dim, rng);
    bst.init(store, prefix + ".bst", channels, state_dim, rng);
    fts.init(store, prefix + ".fts", channels, state_dim, rng);
    bts.init(store, prefix + ".bts", channels, state_dim, rng);
}

Tensor cmm(const Tensor& x, const CmmWeights& w) {
    Tensor y = gtmb(x, ScanOrder::FST, w.fst);
    y = gtmb(y, ScanOrder::BST, w.bst);
    y = gtmb(y, ScanOrder::FTS, w.fts);
    y = gtmb(y, ScanOrder::BTS, w.bts);
    return y;
}

} // namespace gtem
