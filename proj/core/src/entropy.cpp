#include "gtem/entropy.hpp"

#include <cmath>
#include <stdexcept>

namespace gtem {

using detail::attach;
using detail::check;
using detail::check_finite;
using detail::grad_buf;
using detail::make_tensor;
using detail::wants_grad;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kSoftplusInv1 = 0.54132485461292165; // softplus(x) == 1

double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double gauss_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

struct IntervalLik {
    double p;
    double dp_dy; // dp_dmu = -dp_dy
    double dp_dsigma;
};

IntervalLik interval_likelihood_scalar(double y, double mu, double sigma) {
    double d = y - mu;
    double hi = (d + 0.5) / sigma;
    double lo = (d - 0.5) / sigma;
    IntervalLik out;
    out.p = gauss_cdf(hi) - gauss_cdf(lo);
    double phi_hi = gauss_pdf(hi);
    double phi_lo = gauss_pdf(lo);
    out.dp_dy = (phi_hi - phi_lo) / sigma;
    out.dp_dsigma = -(phi_hi * hi - phi_lo * lo) / sigma;
    if (out.p < kLikelihoodFloor) {
        out.p = kLikelihoodFloor;
        out.dp_dy = 0.0;
        out.dp_dsigma = 0.0;
    }
    return out;
}

int64_t conv_half(int64_t n) { return (n - 1) / 2 + 1; } // k=3, s=2, p=1

} // namespace

Tensor quantize(const Tensor& y, QuantizeMode mode, Rng* rng) {
    switch (mode) {
        case QuantizeMode::Infer: return plain_round(y);
        case QuantizeMode::TrainDistortion: return round_ste(y);
        case QuantizeMode::TrainRate: {
            check(rng != nullptr, "quantize: TrainRate needs an rng");
            std::vector<double> noise(static_cast<size_t>(y.numel()));
            for (auto& v : noise) v = rng->uniform() - 0.5;
            return add_constant(y, noise);
        }
    }
    throw std::invalid_argument("quantize: bad mode");
}

Tensor gaussian_interval_likelihood(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
    check(y.shape() == mu.shape() && y.shape() == sigma.shape(),
          "likelihood: shape mismatch");
    const size_t n = y.data().size();
    std::vector<double> p(n);
    for (size_t i = 0; i < n; ++i)
        p[i] = interval_likelihood_scalar(y.data()[i], mu.data()[i], sigma.data()[i]).p;
    Tensor out = make_tensor(y.shape(), std::move(p));
    if (wants_grad({&y, &mu, &sigma})) {
        Node* yn = y.node.get();
        Node* mn = mu.node.get();
        Node* sn = sigma.node.get();
        attach(out, {y.node, mu.node, sigma.node}, [yn, mn, sn](const Node& o) {
            double* gy = yn->requires_grad ? grad_buf(*yn).data() : nullptr;
            double* gm = mn->requires_grad ? grad_buf(*mn).data() : nullptr;
            double* gs = sn->requires_grad ? grad_buf(*sn).data() : nullptr;
            for (size_t i = 0; i < o.grad.size(); ++i) {
                double go = o.grad[i];
                if (go == 0.0) continue;
                IntervalLik l =
                    interval_likelihood_scalar(yn->value[i], mn->value[i], sn->value[i]);
                if (gy) gy[i] += go * l.dp_dy;
                if (gm) gm[i] -= go * l.dp_dy;
                if (gs) gs[i] += go * l.dp_dsigma;
            }
        });
    }
    check_finite(out, "likelihood");
    return out;
}

Tensor bits_from_likelihood(const Tensor& p) {
    return mul_scalar(sum(log(p)), -1.4426950408889634074); // 1/ln 2
}

Tensor scale_from_raw(const Tensor& raw) { return clamp_min(softplus(raw), kSigmaMin); }

// ---------------------------------------------------------------------------

void EntropyModel::init(ParamStore& store, const CodecConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    const int64_t m = cfg.latent_channels;
    const int64_t mz = cfg.hyper_channels;
    const int64_t cf = cfg.hyper_feat_channels;
    const int64_t sw = cfg.slice_width();
    const int64_t cm = cfg.motion_channels;
    const int64_t cg = cfg.cgn_channels;

    ha_k1 = store.add("em.ha.k1", init_uniform_fan({mz, m, 3, 3}, m * 9, rng)).value;
    ha_b1 = store.add("em.ha.b1", init_zeros({mz})).value;
    ha_k2 = store.add("em.ha.k2", init_uniform_fan({mz, mz, 3, 3}, mz * 9, rng)).value;
    ha_b2 = store.add("em.ha.b2", init_zeros({mz})).value;

    hs_k1 = store.add("em.hs.k1", init_uniform_fan({mz, mz, 3, 3}, mz * 9, rng)).value;
    hs_b1 = store.add("em.hs.b1", init_zeros({mz})).value;
    hs_k2 = store.add("em.hs.k2", init_uniform_fan({2 * cf, mz, 3, 3}, mz * 9, rng)).value;
    hs_b2 = store.add("em.hs.b2", init_zeros({2 * cf})).value;

    zp_mu = store.add("em.zprior.mu", init_zeros({mz})).value;
    zp_raw_sigma = store.add("em.zprior.raw_sigma", Tensor::full({mz}, kSoftplusInv1)).value;

    me_in_k = store.add("em.me.in_k", init_uniform_fan({cm, 2 * m, 3, 3}, 2 * m * 9, rng)).value;
    me_in_b = store.add("em.me.in_b", init_zeros({cm})).value;
    me_blocks.resize(4);
    for (int i = 0; i < 4; ++i) {
        std::string p = "em.me.rb" + std::to_string(i);
        me_blocks[static_cast<size_t>(i)].w1 =
            store.add(p + ".w1", init_uniform_fan({cm, cm, 3, 3}, cm * 9, rng)).value;
        me_blocks[static_cast<size_t>(i)].b1 = store.add(p + ".b1", init_zeros({cm})).value;
        me_blocks[static_cast<size_t>(i)].w2 =
            store.add(p + ".w2", init_uniform_fan({cm, cm, 3, 3}, cm * 9, rng)).value;
        me_blocks[static_cast<size_t>(i)].b2 = store.add(p + ".b2", init_zeros({cm})).value;
    }
    // zero-initialized head: identical references produce zero flow out of the box
    me_out_k = store.add("em.me.out_k", init_zeros({2, cm, 3, 3})).value;
    me_out_b = store.add("em.me.out_b", init_zeros({2})).value;

    const int64_t g = cfg.motion_grid;
    alpha = store.add("em.me.alpha", init_ones({1, 2, g, g})).value;
    beta = store.add("em.me.beta", init_zeros({1, 2, g, g})).value;

    cgn_in_k = store.add("em.cgn.in_k", init_uniform_fan({cg, 3 * m, 3, 3}, 3 * m * 9, rng)).value;
    cgn_in_b = store.add("em.cgn.in_b", init_zeros({cg})).value;
    cgn_res.resize(static_cast<size_t>(cfg.cgn_blocks));
    cgn_attn.resize(static_cast<size_t>(cfg.cgn_blocks));
    for (int64_t i = 0; i < cfg.cgn_blocks; ++i) {
        std::string p = "em.cgn.rb" + std::to_string(i);
        auto& rb = cgn_res[static_cast<size_t>(i)];
        rb.w1 = store.add(p + ".w1", init_uniform_fan({cg, cg, 3, 3}, cg * 9, rng)).value;
        rb.b1 = store.add(p + ".b1", init_zeros({cg})).value;
        rb.w2 = store.add(p + ".w2", init_uniform_fan({cg, cg, 3, 3}, cg * 9, rng)).value;
        rb.b2 = store.add(p + ".b2", init_zeros({cg})).value;
        std::string q = "em.cgn.attn" + std::to_string(i);
        auto& wa = cgn_attn[static_cast<size_t>(i)];
        wa.ln_g = store.add(q + ".ln_g", init_ones({cg})).value;
        wa.ln_b = store.add(q + ".ln_b", init_zeros({cg})).value;
        wa.wq = store.add(q + ".wq", init_uniform_fan({cg, cg}, cg, rng)).value;
        wa.wk = store.add(q + ".wk", init_uniform_fan({cg, cg}, cg, rng)).value;
        wa.wv = store.add(q + ".wv", init_uniform_fan({cg, cg}, cg, rng)).value;
        wa.wo = store.add(q + ".wo", init_uniform_fan({cg, cg}, cg, rng)).value;
    }
    cgn_out_k = store.add("em.cgn.out_k", init_uniform_fan({sw, cg, 3, 3}, cg * 9, rng)).value;
    cgn_out_b = store.add("em.cgn.out_b", init_zeros({sw})).value;

    const int64_t hidden = cfg.slice_hidden;
    for (int64_t j = 0; j < 5; ++j) {
        const int64_t in_ch = 2 * cf + j * sw + sw;
        auto head = [&](const std::string& name, bool zero_final,
                        double final_bias) -> SliceHead {
            SliceHead h;
            std::string p = "em.slice" + std::to_string(j) + "." + name;
            h.w1 = store.add(p + ".w1", init_uniform_fan({hidden, in_ch, 3, 3}, in_ch * 9, rng)).value;
            h.b1 = store.add(p + ".b1", init_zeros({hidden})).value;
            h.w2 = store
                       .add(p + ".w2", zero_final
                                           ? init_zeros({sw, hidden, 3, 3})
                                           : init_uniform_fan({sw, hidden, 3, 3}, hidden * 9, rng))
                       .value;
            h.b2 = store.add(p + ".b2", Tensor::full({sw}, final_bias)).value;
            return h;
        };
        auto& s = slices_[static_cast<size_t>(j)];
        s.mu = head("mu", false, 0.0);
        s.sigma = head("sigma", false, kSoftplusInv1); // sigma starts near 1
        s.res = head("res", true, 0.0);                // residual starts at exactly 0
    }
}

Tensor EntropyModel::hyper_encode(const Tensor& y) const {
    check(y.rank() == 4 && y.dim(1) == cfg_.latent_channels, "hyper_encode: latent shape mismatch");
    Tensor h = conv2d(y, ha_k1, {.stride = 2, .pad = 1, .depthwise = false}, ha_b1);
    h = silu(h);
    return conv2d(h, ha_k2, {.stride = 2, .pad = 1, .depthwise = false}, ha_b2);
}

std::array<Tensor, 2> EntropyModel::hyper_decode(const Tensor& z_hat) const {
    check(z_hat.rank() == 4 && z_hat.dim(1) == cfg_.hyper_channels,
          "hyper_decode: side info shape mismatch");
    Tensor h = conv2d(nearest_upsample2(z_hat), hs_k1, {.stride = 1, .pad = 1, .depthwise = false},
                      hs_b1);
    h = silu(h);
    h = conv2d(nearest_upsample2(h), hs_k2, {.stride = 1, .pad = 1, .depthwise = false}, hs_b2);
    auto halves = split_channels(h, 2);
    return {halves[0], halves[1]};
}

GaussianParams EntropyModel::z_prior(const Shape& z_shape) const {
    GaussianParams p;
    p.mu = broadcast_channels(zp_mu, z_shape);
    p.sigma = broadcast_channels(scale_from_raw(zp_raw_sigma), z_shape);
    return p;
}

Tensor EntropyModel::resblock(const ResBlock& rb, const Tensor& x) const {
    Tensor h = conv2d(x, rb.w1, {.stride = 1, .pad = 1, .depthwise = false}, rb.b1);
    h = gelu(h);
    h = conv2d(h, rb.w2, {.stride = 1, .pad = 1, .depthwise = false}, rb.b2);
    return add(x, h);
}

MotionField EntropyModel::estimate_motion(const Tensor& prev2, const Tensor& prev1) const {
    check(prev1.shape() == prev2.shape(), "estimate_motion: reference shape mismatch");
    Tensor h = conv2d(concat_channels({prev2, prev1}), me_in_k,
                      {.stride = 1, .pad = 1, .depthwise = false}, me_in_b);
    h = gelu(h);
    for (const ResBlock& rb : me_blocks) h = resblock(rb, h);
    MotionField m;
    m.flow = conv2d(h, me_out_k, {.stride = 1, .pad = 1, .depthwise = false}, me_out_b);
    return m;
}

Tensor EntropyModel::rectify(const MotionField& m) const {
    const Shape& s = m.flow.shape();
    Tensor a = alpha, b = beta;
    if (alpha.dim(2) != s[2] || alpha.dim(3) != s[3]) {
        a = nearest_resize(alpha, s[2], s[3]);
        b = nearest_resize(beta, s[2], s[3]);
    }
    return add(mul(a, m.flow), b);
}

Tensor EntropyModel::window_attention(const WindowAttention& wa, const Tensor& x) const {
    constexpr int64_t kWin = 4;
    const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor t = layernorm_channels(x, wa.ln_g, wa.ln_b, 1e-6);
    const int64_t ph = (kWin - h % kWin) % kWin;
    const int64_t pw = (kWin - w % kWin) % kWin;
    if (ph || pw) t = zero_pad2d(t, 0, ph, 0, pw);
    const int64_t hh = h + ph, ww = w + pw;
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));

    std::vector<Tensor> rows;
    for (int64_t wy = 0; wy < hh; wy += kWin) {
        std::vector<Tensor> cols;
        for (int64_t wx = 0; wx < ww; wx += kWin) {
            Tensor win = narrow(narrow(t, 2, wy, kWin), 3, wx, kWin); // (1,C,4,4)
            Tensor tokens = reshape(permute(reshape(win, {c, kWin * kWin}), {1, 0}),
                                    {kWin * kWin, c});
            Tensor q = matmul(tokens, wa.wq);
            Tensor k = matmul(tokens, wa.wk);
            Tensor v = matmul(tokens, wa.wv);
            Tensor attn = softmax_lastdim(mul_scalar(matmul(q, permute(k, {1, 0})), scale));
            Tensor o = matmul(matmul(attn, v), wa.wo);
            cols.push_back(reshape(permute(o, {1, 0}), {1, c, kWin, kWin}));
        }
        rows.push_back(cols.size() == 1 ? cols[0] : concat(cols, 3));
    }
    Tensor joined = rows.size() == 1 ? rows[0] : concat(rows, 2);
    if (ph || pw) joined = narrow(narrow(joined, 2, 0, h), 3, 0, w);
    return add(x, joined);
}

Tensor EntropyModel::generate_condition(const Tensor& y_warp, const Tensor& prev2,
                                        const Tensor& prev1) const {
    Tensor h = conv2d(concat_channels({y_warp, prev2, prev1}), cgn_in_k,
                      {.stride = 1, .pad = 1, .depthwise = false}, cgn_in_b);
    for (size_t i = 0; i < cgn_res.size(); ++i) {
        h = resblock(cgn_res[i], h);
        h = window_attention(cgn_attn[i], h);
    }
    return conv2d(h, cgn_out_k, {.stride = 1, .pad = 1, .depthwise = false}, cgn_out_b);
}

Tensor EntropyModel::frame_condition(const ConditionBuffer& buf, int64_t lh, int64_t lw,
                                     bool zero_conditions) const {
    const int64_t m = cfg_.latent_channels;
    if (zero_conditions) return Tensor::zeros({1, cfg_.slice_width(), lh, lw});
    Tensor prev1 = buf.prev1 ? *buf.prev1 : Tensor::zeros({1, m, lh, lw});
    Tensor prev2 = buf.prev2 ? *buf.prev2 : Tensor::zeros({1, m, lh, lw});
    Tensor warped;
    if (buf.prev1 && buf.prev2) {
        MotionField flow = estimate_motion(prev2, prev1);
        warped = warp_bilinear(prev1, rectify(flow));
    } else {
        warped = Tensor::zeros({1, m, lh, lw}); // missing references: zero flow, zero feature
    }
    return generate_condition(warped, prev2, prev1);
}

Tensor EntropyModel::run_head(const SliceHead& h, const Tensor& in) const {
    Tensor t = conv2d(in, h.w1, {.stride = 1, .pad = 1, .depthwise = false}, h.b1);
    t = gelu(t);
    return conv2d(t, h.w2, {.stride = 1, .pad = 1, .depthwise = false}, h.b2);
}

Tensor EntropyModel::slice_input(const Tensor& f_mu, const Tensor& f_sigma,
                                 const std::vector<Tensor>& refined_prefix,
                                 const Tensor& condition) const {
    std::vector<Tensor> parts{f_mu, f_sigma};
    for (const Tensor& t : refined_prefix) parts.push_back(t);
    parts.push_back(condition);
    return concat_channels(parts);
}

EntropyModel::SlicePass EntropyModel::slice_pass(const Tensor& y_hat_frame, const Tensor& f_mu,
                                                 const Tensor& f_sigma,
                                                 const Tensor& condition) const {
    check(y_hat_frame.rank() == 4 && y_hat_frame.dim(0) == 1 &&
              y_hat_frame.dim(1) == cfg_.latent_channels,
          "slice_pass: frame latent shape mismatch");
    SlicePass out;
    auto y_slices = split_channels(y_hat_frame, 5);
    std::vector<Tensor> refined;
    for (int64_t j = 0; j < 5; ++j) {
        const SliceNet& net = slices_[static_cast<size_t>(j)];
        Tensor in = slice_input(f_mu, f_sigma, refined, condition);
        out.params[static_cast<size_t>(j)].mu = run_head(net.mu, in);
        out.params[static_cast<size_t>(j)].sigma = scale_from_raw(run_head(net.sigma, in));
        out.residual[static_cast<size_t>(j)] = run_head(net.res, in);
        refined.push_back(add(out.residual[static_cast<size_t>(j)], y_slices[static_cast<size_t>(j)]));
    }
    out.y_refined = concat_channels(refined);
    return out;
}

EntropyTrainOut EntropyModel::forward_train(const Tensor& y_gop, Rng& noise_rng) const {
    const int64_t frames = y_gop.dim(0);
    const int64_t lh = y_gop.dim(2), lw = y_gop.dim(3);

    Tensor z = hyper_encode(y_gop);
    Tensor z_noise = quantize(z, QuantizeMode::TrainRate, &noise_rng);
    Tensor z_ste = quantize(z, QuantizeMode::TrainDistortion);
    GaussianParams zp = z_prior(z.shape());
    Tensor z_lik = gaussian_interval_likelihood(z_noise, zp.mu, zp.sigma);

    auto f = hyper_decode(z_ste);
    Tensor f_mu_all = narrow(narrow(f[0], 2, 0, lh), 3, 0, lw);
    Tensor f_sigma_all = narrow(narrow(f[1], 2, 0, lh), 3, 0, lw);

    Tensor y_ste = quantize(y_gop, QuantizeMode::TrainDistortion);
    Tensor y_noise = quantize(y_gop, QuantizeMode::TrainRate, &noise_rng);

    EntropyTrainOut out;
    ConditionBuffer buf;
    std::vector<Tensor> refined_frames;
    Tensor y_bits_total = Tensor::scalar(0.0);
    for (int64_t t = 0; t < frames; ++t) {
        Tensor cond = frame_condition(buf, lh, lw, false);
        Tensor y_hat_t = narrow(y_ste, 0, t, 1);
        SlicePass sp = slice_pass(y_hat_t, narrow(f_mu_all, 0, t, 1),
                                  narrow(f_sigma_all, 0, t, 1), cond);
        auto noise_slices = split_channels(narrow(y_noise, 0, t, 1), 5);
        Tensor frame_bits = Tensor::scalar(0.0);
        for (int64_t j = 0; j < 5; ++j) {
            Tensor lik = gaussian_interval_likelihood(noise_slices[static_cast<size_t>(j)],
                                                      sp.params[static_cast<size_t>(j)].mu,
                                                      sp.params[static_cast<size_t>(j)].sigma);
            frame_bits = add(frame_bits, bits_from_likelihood(lik));
        }
        out.per_frame_y_bits.push_back(frame_bits);
        y_bits_total = add(y_bits_total, frame_bits);
        Tensor z_lik_t = narrow(z_lik, 0, t, 1);
        out.per_frame_z_bits.push_back(bits_from_likelihood(z_lik_t));
        refined_frames.push_back(sp.y_refined);
        buf.push(sp.y_refined);
    }
    out.y_refined = concat(refined_frames, 0);
    out.y_bits = y_bits_total;
    out.z_bits = bits_from_likelihood(z_lik);
    return out;
}

namespace {

// flatten one frame slice (1,c,h,w) into coded symbol order
std::vector<int64_t> tensor_symbols(const Tensor& t) {
    std::vector<int64_t> syms(t.data().size());
    for (size_t i = 0; i < syms.size(); ++i) syms[i] = std::llround(t.data()[i]);
    return syms;
}

double estimate_bits_at(const std::vector<int64_t>& syms, const Tensor& mu, const Tensor& sigma) {
    double bits = 0.0;
    for (size_t i = 0; i < syms.size(); ++i) {
        IntervalLik l = interval_likelihood_scalar(static_cast<double>(syms[i]),
                                                   mu.data()[i], sigma.data()[i]);
        bits -= std::log2(l.p);
    }
    return bits;
}

} // namespace

EntropyEncodeOut EntropyModel::encode_gop(const Tensor& y_gop, bool zero_conditions) const {
    NoGradGuard ng;
    const int64_t frames = y_gop.dim(0);
    const int64_t lh = y_gop.dim(2), lw = y_gop.dim(3);
    const int64_t mz = cfg_.hyper_channels;

    Tensor z = hyper_encode(y_gop);
    Tensor z_hat = plain_round(z);
    GaussianParams zp = z_prior(z.shape());

    EntropyEncodeOut out;
    out.segments.frame_slices.resize(static_cast<size_t>(frames));

    std::vector<uint8_t> stream;
    RangeEncoder enc(stream);

    // side information first: one table per channel of the factorized prior
    {
        std::vector<CdfTable> tables(static_cast<size_t>(mz));
        for (int64_t c = 0; c < mz; ++c)
            build_cdf_into(zp.mu.at({0, c, 0, 0}), zp.sigma.at({0, c, 0, 0}),
                           kDefaultAlphabetBound, tables[static_cast<size_t>(c)]);
        const int64_t zh = z_hat.dim(2), zw = z_hat.dim(3);
        const double* zd = z_hat.data().data();
        for (int64_t t = 0; t < frames; ++t)
            for (int64_t c = 0; c < mz; ++c) {
                const CdfTable& tab = tables[static_cast<size_t>(c)];
                for (int64_t i = 0; i < zh * zw; ++i)
                    encode_value(enc, std::llround(zd[(t * mz + c) * zh * zw + i]), tab);
            }
        auto zsyms = tensor_symbols(z_hat);
        out.estimated_z_bits = estimate_bits_at(zsyms, zp.mu, zp.sigma);
    }
    size_t mark = stream.size();
    std::vector<size_t> boundaries; // after z, then after each (frame, slice)

    auto f = hyper_decode(z_hat);
    Tensor f_mu_all = narrow(narrow(f[0], 2, 0, lh), 3, 0, lw);
    Tensor f_sigma_all = narrow(narrow(f[1], 2, 0, lh), 3, 0, lw);

    Tensor y_hat = plain_round(y_gop);
    ConditionBuffer buf;
    std::vector<Tensor> refined_frames;
    CdfTable scratch;
    for (int64_t t = 0; t < frames; ++t) {
        Tensor cond = frame_condition(buf, lh, lw, zero_conditions);
        Tensor f_mu_t = narrow(f_mu_all, 0, t, 1);
        Tensor f_sigma_t = narrow(f_sigma_all, 0, t, 1);
        auto y_slices = split_channels(narrow(y_hat, 0, t, 1), 5);
        std::vector<Tensor> refined;
        double frame_bits = 0.0;
        for (int64_t j = 0; j < 5; ++j) {
            const SliceNet& net = slices_[static_cast<size_t>(j)];
            Tensor in = slice_input(f_mu_t, f_sigma_t, refined, cond);
            Tensor mu = run_head(net.mu, in);
            Tensor sigma = scale_from_raw(run_head(net.sigma, in));
            Tensor r = run_head(net.res, in);
            auto syms = tensor_symbols(y_slices[static_cast<size_t>(j)]);
            for (size_t i = 0; i < syms.size(); ++i) {
                build_cdf_into(mu.data()[i], sigma.data()[i], kDefaultAlphabetBound, scratch);
                encode_value(enc, syms[i], scratch);
            }
            frame_bits += estimate_bits_at(syms, mu, sigma);
            refined.push_back(add(r, y_slices[static_cast<size_t>(j)]));
            boundaries.push_back(stream.size());
        }
        out.per_frame_bits.push_back(frame_bits);
        out.estimated_y_bits += frame_bits;
        Tensor y_ref = concat_channels(refined);
        refined_frames.push_back(y_ref);
        buf.push(y_ref);
    }
    enc.finish(); // flush bytes belong to the final slice segment

    out.segments.z.assign(stream.begin(), stream.begin() + static_cast<ptrdiff_t>(mark));
    size_t prev = mark;
    size_t bi = 0;
    for (int64_t t = 0; t < frames; ++t)
        for (int64_t j = 0; j < 5; ++j) {
            size_t end = (t == frames - 1 && j == 4) ? stream.size() : boundaries[bi];
            out.segments.frame_slices[static_cast<size_t>(t)][static_cast<size_t>(j)].assign(
                stream.begin() + static_cast<ptrdiff_t>(prev),
                stream.begin() + static_cast<ptrdiff_t>(end));
            prev = end;
            ++bi;
        }
    out.y_refined = concat(refined_frames, 0);
    out.estimated_bits = out.estimated_y_bits + out.estimated_z_bits;
    return out;
}

Tensor EntropyModel::decode_gop(const GopSegments& segments, int64_t frames, int64_t lh,
                                int64_t lw, bool zero_conditions) const {
    NoGradGuard ng;
    check(static_cast<int64_t>(segments.frame_slices.size()) == frames,
          "decode_gop: segment framing mismatch");
    const int64_t mz = cfg_.hyper_channels;
    const int64_t sw = cfg_.slice_width();
    const int64_t zh = conv_half(conv_half(lh));
    const int64_t zw = conv_half(conv_half(lw));

    // one coder stream per GOP: concatenate the segments back
    std::vector<uint8_t> stream = segments.z;
    for (const auto& fs : segments.frame_slices)
        for (const auto& s : fs) stream.insert(stream.end(), s.begin(), s.end());
    RangeDecoder dec(stream.data(), stream.size());

    Tensor z_hat = Tensor::zeros({frames, mz, zh, zw});
    {
        GaussianParams zp = z_prior(z_hat.shape());
        std::vector<CdfTable> tables(static_cast<size_t>(mz));
        for (int64_t c = 0; c < mz; ++c)
            build_cdf_into(zp.mu.at({0, c, 0, 0}), zp.sigma.at({0, c, 0, 0}),
                           kDefaultAlphabetBound, tables[static_cast<size_t>(c)]);
        auto zd = z_hat.raw();
        for (int64_t t = 0; t < frames; ++t)
            for (int64_t c = 0; c < mz; ++c) {
                const CdfTable& tab = tables[static_cast<size_t>(c)];
                for (int64_t i = 0; i < zh * zw; ++i)
                    zd[static_cast<size_t>((t * mz + c) * zh * zw + i)] =
                        static_cast<double>(decode_value(dec, tab));
            }
    }

    auto f = hyper_decode(z_hat);
    Tensor f_mu_all = narrow(narrow(f[0], 2, 0, lh), 3, 0, lw);
    Tensor f_sigma_all = narrow(narrow(f[1], 2, 0, lh), 3, 0, lw);

    ConditionBuffer buf;
    std::vector<Tensor> refined_frames;
    CdfTable scratch;
    for (int64_t t = 0; t < frames; ++t) {
        Tensor cond = frame_condition(buf, lh, lw, zero_conditions);
        Tensor f_mu_t = narrow(f_mu_all, 0, t, 1);
        Tensor f_sigma_t = narrow(f_sigma_all, 0, t, 1);
        std::vector<Tensor> refined;
        for (int64_t j = 0; j < 5; ++j) {
            const SliceNet& net = slices_[static_cast<size_t>(j)];
            Tensor in = slice_input(f_mu_t, f_sigma_t, refined, cond);
            Tensor mu = run_head(net.mu, in);
            Tensor sigma = scale_from_raw(run_head(net.sigma, in));
            Tensor r = run_head(net.res, in);
            Tensor y_hat_j = Tensor::zeros({1, sw, lh, lw});
            auto yd = y_hat_j.raw();
            for (size_t i = 0; i < yd.size(); ++i) {
                build_cdf_into(mu.data()[i], sigma.data()[i], kDefaultAlphabetBound, scratch);
                yd[i] = static_cast<double>(decode_value(dec, scratch));
            }
            refined.push_back(add(r, y_hat_j));
        }
        Tensor y_ref = concat_channels(refined);
        refined_frames.push_back(y_ref);
        buf.push(y_ref);
    }
    return concat(refined_frames, 0);
}

} // namespace gtem
