// Acceptance suite: every release criterion as one pass/fail line, each with
// its tolerance pinned in code. Run all criteria or a single one with
// --criterion N. Exits non-zero if anything fails.

#include "gtem/locality.hpp"
#include "gtem/metrics.hpp"
#include "gtem/pipeline.hpp"
#include "gtem/scan.hpp"
#include "gtem/selftest.hpp"
#include "gtem/trainer.hpp"
#include "gtem/video_io.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <cstdarg>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

using namespace gtem;
using oracles::bit_equal;
using oracles::fd_gradcheck;
using oracles::max_rel_err;
using oracles::random_tensor;

namespace {

struct Criterion {
    int id;
    const char* title;
    std::function<bool(std::string&)> run;
};


std::string fmt(const char* f, ...) {
    char buf[256];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

CodecConfig micro_config() {
    CodecConfig c;
    c.stage_channels = {4, 4, 6};
    c.latent_channels = 10;
    c.state_dim = 4;
    c.hyper_channels = 4;
    c.hyper_feat_channels = 4;
    c.slice_hidden = 6;
    c.cgn_channels = 8;
    c.motion_channels = 8;
    return c;
}

// --- 1: transform reversibility --------------------------------------------
bool criterion1(std::string& detail) {
    Rng rng(101);
    const ScanOrder orders[4] = {ScanOrder::FST, ScanOrder::BST, ScanOrder::FTS, ScanOrder::BTS};
    for (int trial = 0; trial < 200; ++trial) {
        Shape s = {1 + static_cast<int64_t>(rng.below(4)), 1 + static_cast<int64_t>(rng.below(6)),
                   1 + static_cast<int64_t>(rng.below(7)), 1 + static_cast<int64_t>(rng.below(7))};
        Tensor x = random_tensor(s, rng, -9.0, 9.0);
        for (ScanOrder k : orders) {
            if (!bit_equal(inverse_transform(apply_transform(x, k), k, s), x)) {
                detail = std::string("shape ") + shape_str(s) + " order " + scan_order_name(k);
                return false;
            }
        }
    }
    detail = "200 shapes x 4 orders, bit-exact";
    return true;
}

// --- 2: scan-order oracle ---------------------------------------------------
bool criterion2(std::string& detail) {
    const int64_t t = 3, h = 2, w = 2;
    std::vector<std::array<int64_t, 3>> fst_expect, fts_expect;
    for (int64_t f = 0; f < t; ++f)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) fst_expect.push_back({f, y, x});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t f = 0; f < t; ++f) fts_expect.push_back({f, y, x});

    if (scan_index_order(ScanOrder::FST, t, h, w) != fst_expect) {
        detail = "FST enumeration mismatch";
        return false;
    }
    if (scan_index_order(ScanOrder::FTS, t, h, w) != fts_expect) {
        detail = "FTS enumeration mismatch";
        return false;
    }
    auto bst = scan_index_order(ScanOrder::BST, t, h, w);
    auto bts = scan_index_order(ScanOrder::BTS, t, h, w);
    std::reverse(bst.begin(), bst.end());
    std::reverse(bts.begin(), bts.end());
    if (bst != fst_expect || bts != fts_expect) {
        detail = "backward orders are not the reversed forward orders";
        return false;
    }

    // the tensor path must realize the same orders
    Tensor x = Tensor::zeros({t, 1, h, w});
    for (int64_t f = 0; f < t; ++f)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx)
                x.raw()[static_cast<size_t>((f * h + y) * w + xx)] =
                    static_cast<double>(f * 100 + y * 10 + xx);
    for (ScanOrder k : {ScanOrder::FST, ScanOrder::BST, ScanOrder::FTS, ScanOrder::BTS}) {
        auto seq = scan_index_order(k, t, h, w);
        Tensor tr = apply_transform(x, k);
        for (size_t i = 0; i < seq.size(); ++i)
            if (tr.data()[i] != static_cast<double>(seq[i][0] * 100 + seq[i][1] * 10 + seq[i][2])) {
                detail = std::string("tensor flattening disagrees for ") + scan_order_name(k);
                return false;
            }
    }
    detail = "FST/FTS enumerations and reversals exact";
    return true;
}

// --- 3: selective-scan equivalence ------------------------------------------
bool criterion3(std::string& detail) {
    Rng rng(103);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t l = 1 + static_cast<int64_t>(rng.below(256));
        const int64_t ch = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(8));
        Tensor u = random_tensor({l, ch}, rng);
        Tensor delta = random_tensor({l, ch}, rng, 0.005, 0.7);
        Tensor b = random_tensor({l, n}, rng);
        Tensor c = random_tensor({l, n}, rng);
        Tensor a = random_tensor({ch, n}, rng, -3.0, -0.05);
        Tensor d = random_tensor({ch}, rng);
        Tensor fast = selective_scan(u, delta, b, c, a, d);

        std::vector<double> h(static_cast<size_t>(ch * n), 0.0);
        for (int64_t t = 0; t < l; ++t)
            for (int64_t cc = 0; cc < ch; ++cc) {
                double acc = 0.0;
                for (int64_t k = 0; k < n; ++k) {
                    double ab = std::exp(delta.at({t, cc}) * a.at({cc, k}));
                    double& hv = h[static_cast<size_t>(cc * n + k)];
                    hv = ab * hv + delta.at({t, cc}) * b.at({t, k}) * u.at({t, cc});
                    acc += c.at({t, k}) * hv;
                }
                acc += d.at({cc}) * u.at({t, cc});
                double got = fast.at({t, cc});
                worst = std::max(worst, std::abs(acc - got) /
                                            std::max({std::abs(acc), std::abs(got), 1e-12}));
            }
    }
    detail = fmt("100 instances, max rel err %.2e", worst);
    return worst < 1e-10;
}

// --- 4: difference-convolution algebra ---------------------------------------
bool criterion4(std::string& detail) {
    Rng rng(104);
    // (a) difference kinds vanish on constants
    for (int trial = 0; trial < 25; ++trial) {
        int64_t c = 1 + static_cast<int64_t>(rng.below(4));
        Tensor x = Tensor::full({1, c, 5 + static_cast<int64_t>(rng.below(4)), 6},
                                rng.uniform(-3.0, 3.0));
        Tensor k = random_tensor({c, 1, 3, 3}, rng);
        for (DiffConvKind kind : {DiffConvKind::Central, DiffConvKind::Vertical,
                                  DiffConvKind::Horizontal, DiffConvKind::Angular})
        {
            Tensor out = diff_conv(x, k, kind);
            for (double v : out.data())
                if (std::abs(v) >= 1e-12) {
                    detail = "difference branch non-zero on a constant input";
                    return false;
                }
        }
    }
    // (b) branch sum equals the merged kernel
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        int64_t c = 1 + static_cast<int64_t>(rng.below(4));
        ParamStore store;
        Rng wrng(rng.next_u64());
        HcbWeights w;
        w.init(store, "h", c, wrng);
        Tensor x = random_tensor({1, c, 6, 6}, rng);
        worst = std::max(worst,
                         max_rel_err(hcb_branch_sum(x, w), hcb_merged_conv(x, hcb_merged_kernel(w))));
    }
    detail = fmt("constants exact, 100 merge trials max rel err %.2e", worst);
    return worst < 1e-10;
}

// --- 5: gradient verification -------------------------------------------------
bool criterion5(std::string& detail) {
    Rng rng(105);
    struct Layer {
        const char* name;
        double worst;
    };
    std::vector<Layer> results;
    auto record = [&](const char* name, double worst) { results.push_back({name, worst}); };

    {
        Tensor x = random_tensor({4, 6}, rng).set_requires_grad(true);
        Tensor w = random_tensor({6, 5}, rng).set_requires_grad(true);
        Tensor b = random_tensor({5}, rng).set_requires_grad(true);
        auto fwd = [&] { return linear(x, w, b); };
        double worst = std::max({fd_gradcheck(fwd, x, 50, rng).worst_rel,
                                 fd_gradcheck(fwd, w, 40, rng).worst_rel,
                                 fd_gradcheck(fwd, b, 10, rng).worst_rel});
        record("linear", worst);
    }
    {
        Tensor x = random_tensor({2, 3, 6, 6}, rng).set_requires_grad(true);
        Tensor k = random_tensor({4, 3, 3, 3}, rng).set_requires_grad(true);
        Tensor b = random_tensor({4}, rng).set_requires_grad(true);
        auto fwd = [&] { return conv2d(x, k, {.stride = 2, .pad = 1, .depthwise = false}, b); };
        double worst = std::max({fd_gradcheck(fwd, x, 40, rng).worst_rel,
                                 fd_gradcheck(fwd, k, 40, rng).worst_rel,
                                 fd_gradcheck(fwd, b, 8, rng).worst_rel});
        Tensor kd = random_tensor({3, 1, 3, 3}, rng).set_requires_grad(true);
        auto fwd2 = [&] { return conv2d(x, kd, {.stride = 1, .pad = 1, .depthwise = true}); };
        worst = std::max(worst, fd_gradcheck(fwd2, kd, 27, rng).worst_rel);
        record("conv2d", worst);
    }
    {
        Tensor x = random_tensor({2, 5, 3, 3}, rng).set_requires_grad(true);
        Tensor g = random_tensor({5}, rng, 0.5, 1.5).set_requires_grad(true);
        Tensor b = random_tensor({5}, rng).set_requires_grad(true);
        auto fwd = [&] { return layernorm_channels(x, g, b, 1e-6); };
        double worst = std::max({fd_gradcheck(fwd, x, 60, rng).worst_rel,
                                 fd_gradcheck(fwd, g, 20, rng).worst_rel,
                                 fd_gradcheck(fwd, b, 20, rng).worst_rel});
        record("layernorm", worst);
    }
    {
        Tensor x = random_tensor({60}, rng, -2.5, 2.5).set_requires_grad(true);
        double worst = 0.0;
        worst = std::max(worst, fd_gradcheck([&] { return silu(x); }, x, 100, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck([&] { return gelu(x); }, x, 100, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck([&] { return softplus(x); }, x, 100, rng).worst_rel);
        record("activations", worst);
    }
    {
        ParamStore store;
        Rng wrng(51);
        GtmbWeights w;
        w.init(store, "g", 4, 4, wrng);
        Tensor x = random_tensor({2, 4, 3, 3}, rng).set_requires_grad(true);
        auto fwd = [&] { return gtmb(x, ScanOrder::BTS, w); };
        double worst = fd_gradcheck(fwd, x, 30, rng).worst_rel;
        worst = std::max(worst, fd_gradcheck(fwd, w.ssm.a_log, 8, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck(fwd, w.in_w, 8, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck(fwd, w.dw_k, 8, rng).worst_rel);
        record("gtmb", worst);
    }
    {
        ParamStore store;
        Rng wrng(52);
        CmmWeights w;
        w.init(store, "c", 4, 4, wrng);
        Tensor x = random_tensor({2, 4, 2, 2}, rng).set_requires_grad(true);
        auto fwd = [&] { return cmm(x, w); };
        double worst = fd_gradcheck(fwd, x, 32, rng).worst_rel;
        worst = std::max(worst, fd_gradcheck(fwd, w.fts.ssm.dt_w, 10, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck(fwd, w.bts.out_w, 10, rng).worst_rel);
        record("cmm", worst);
    }
    {
        ParamStore store;
        Rng wrng(53);
        LrffnWeights w;
        w.init(store, "l", 4, 8, wrng);
        Tensor x = random_tensor({1, 4, 4, 4}, rng).set_requires_grad(true);
        auto fwd = [&] { return lrffn(x, w); };
        double worst = fd_gradcheck(fwd, x, 30, rng).worst_rel;
        worst = std::max(worst, fd_gradcheck(fwd, w.hcb.k_central, 10, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck(fwd, w.hcb.mix_w, 10, rng).worst_rel);
        record("lrffn", worst);
    }
    {
        ParamStore store;
        Rng wrng(54);
        EntropyModel em;
        em.init(store, micro_config(), wrng);
        Tensor a = random_tensor({1, 10, 4, 4}, rng).set_requires_grad(true);
        Tensor b = random_tensor({1, 10, 4, 4}, rng);
        Tensor c = random_tensor({1, 10, 4, 4}, rng);
        auto fwd = [&] { return em.generate_condition(a, b, c); };
        double worst = fd_gradcheck(fwd, a, 30, rng).worst_rel;
        Parameter* wq = store.find("em.cgn.attn0.wq");
        Parameter* rb = store.find("em.cgn.rb1.w1");
        worst = std::max(worst, fd_gradcheck(fwd, wq->value, 12, rng).worst_rel);
        worst = std::max(worst, fd_gradcheck(fwd, rb->value, 12, rng).worst_rel);
        record("cgn", worst);
    }
    {
        Tensor f = random_tensor({1, 2, 5, 5}, rng).set_requires_grad(true);
        Tensor flow = random_tensor({1, 2, 5, 5}, rng, -0.45, 0.45).set_requires_grad(true);
        auto fwd = [&] { return warp_bilinear(f, flow); };
        double worst = std::max(fd_gradcheck(fwd, f, 25, rng).worst_rel,
                                fd_gradcheck(fwd, flow, 25, rng).worst_rel);
        record("warp", worst);
    }
    {
        // rate-distortion loss through likelihoods, mean/scale and frames
        Tensor x = random_tensor({2, 3, 4, 4}, rng, 0.0, 1.0);
        Tensor x_hat = random_tensor({2, 3, 4, 4}, rng, 0.0, 1.0).set_requires_grad(true);
        Tensor y = random_tensor({2, 10, 2, 2}, rng, -2.0, 2.0);
        Tensor mu = random_tensor({2, 10, 2, 2}, rng, -1.0, 1.0).set_requires_grad(true);
        Tensor sg = random_tensor({2, 10, 2, 2}, rng, 0.3, 2.0).set_requires_grad(true);
        auto fwd = [&] {
            Tensor yb = bits_from_likelihood(gaussian_interval_likelihood(y, mu, sg));
            return rd_loss(x, x_hat, yb, Tensor::scalar(0.0), 256.0);
        };
        double worst = std::max({fd_gradcheck(fwd, x_hat, 30, rng).worst_rel,
                                 fd_gradcheck(fwd, mu, 15, rng).worst_rel,
                                 fd_gradcheck(fwd, sg, 15, rng).worst_rel});
        record("rd_loss", worst);
    }
    {
        FeatureExtractor fe;
        LossWeights lw;
        Tensor ref = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
        Tensor x_hat = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0).set_requires_grad(true);
        auto fwd = [&] { return perceptual_style_loss(ref, x_hat, fe, lw); };
        record("perceptual_style_loss", fd_gradcheck(fwd, x_hat, 50, rng).worst_rel);
    }

    double worst = 0.0;
    for (const auto& r : results) {
        worst = std::max(worst, r.worst);
        if (r.worst >= 1e-4) {
            detail = fmt("%s failed with rel err %.2e", r.name, r.worst);
            return false;
        }
    }
    detail = fmt("%zu layers, worst rel err %.2e", results.size(), worst);
    return true;
}

// --- 6: entropy-coding correctness -------------------------------------------
bool criterion6(std::string& detail) {
    Rng rng(106);
    // 1e5-symbol random round trip
    const size_t n = 100000;
    std::vector<int64_t> symbols(n);
    std::vector<double> mus(n), sigmas(n);
    for (size_t i = 0; i < n; ++i) {
        mus[i] = rng.uniform(-6.0, 6.0);
        sigmas[i] = rng.uniform(0.04, 10.0);
        double draw = mus[i] + sigmas[i] * rng.normal();
        if (rng.below(500) == 0) draw = rng.uniform(-50000.0, 50000.0);
        symbols[i] = std::llround(draw);
    }
    std::vector<uint8_t> bytes;
    {
        RangeEncoder enc(bytes);
        CdfTable t;
        for (size_t i = 0; i < n; ++i) {
            build_cdf_into(mus[i], sigmas[i], kDefaultAlphabetBound, t);
            encode_value(enc, symbols[i], t);
        }
        enc.finish();
    }
    {
        RangeDecoder dec(bytes.data(), bytes.size());
        CdfTable t;
        for (size_t i = 0; i < n; ++i) {
            build_cdf_into(mus[i], sigmas[i], kDefaultAlphabetBound, t);
            if (decode_value(dec, t) != symbols[i]) {
                detail = "round-trip mismatch at symbol " + std::to_string(i);
                return false;
            }
        }
    }

    // rate agreement on real model outputs
    VideoCodec codec(micro_config(), 61);
    double worst_gap = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x = random_tensor({4, 3, 32, 32}, rng, 0.0, 1.0);
        auto enc = codec.encode_gop(x, false, false);
        double actual = static_cast<double>(enc.segments.payload_bytes()) * 8.0;
        double tol = 0.01 * enc.estimated_bits + 256.0;
        double gap = std::abs(actual - enc.estimated_bits);
        worst_gap = std::max(worst_gap, gap / tol);
        if (gap > tol) {
            detail = "rate gap " + std::to_string(gap) + " bits exceeds " + std::to_string(tol);
            return false;
        }
    }

    // likelihood anchor against the quadrature oracle
    double p = gaussian_interval_likelihood(Tensor::scalar(0.0), Tensor::scalar(0.0),
                                            Tensor::scalar(1.0))
                   .item();
    if (std::abs(p - 0.382925) > 1e-6) {
        detail = "likelihood at the origin is " + std::to_string(p);
        return false;
    }
    if (std::abs(p - oracles::interval_mass_oracle(0.0, 0.0, 1.0)) > 1e-9) {
        detail = "likelihood disagrees with the quadrature oracle";
        return false;
    }
    detail = "1e5 symbols exact, worst rate-gap ratio " + std::to_string(worst_gap) +
             ", likelihood anchor " + std::to_string(p);
    return true;
}

// --- 7: decoder sufficiency ----------------------------------------------------
bool criterion7(std::string& detail) {
    Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        VideoCodec codec(micro_config(), 700 + static_cast<uint64_t>(trial));
        int64_t frames = 2 + static_cast<int64_t>(rng.below(4));
        Tensor x = random_tensor({frames, 3, 32, 32}, rng, 0.0, 1.0);
        auto enc = codec.encode_gop(x, false, true);
        Tensor y_dec = codec.entropy().decode_gop(enc.segments, frames, 2, 2, false);
        if (!bit_equal(enc.y_refined, y_dec)) {
            detail = "refined latents differ at trial " + std::to_string(trial);
            return false;
        }
        NoGradGuard ng;
        Tensor x_dec = codec.decode_frames(y_dec);
        if (!bit_equal(enc.x_hat, x_dec)) {
            detail = "reconstructions differ at trial " + std::to_string(trial);
            return false;
        }
    }
    detail = "20 random GOPs bit-identical through both paths";
    return true;
}

// --- 8: motion-prior property ---------------------------------------------------
bool criterion8(std::string& detail) {
    Rng rng(108);
    for (int trial = 0; trial < 30; ++trial) {
        const int64_t c = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t h = 6 + static_cast<int64_t>(rng.below(6));
        const int64_t w = 6 + static_cast<int64_t>(rng.below(6));
        const int64_t vx = static_cast<int64_t>(rng.below(5)) - 2;
        const int64_t vy = static_cast<int64_t>(rng.below(5)) - 2;
        Tensor prev = random_tensor({1, c, h, w}, rng);
        Tensor cur = Tensor::zeros({1, c, h, w});
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    cur.raw()[static_cast<size_t>((ch * h + y) * w + x)] =
                        prev.at({0, ch, (y - vy + h) % h, (x - vx + w) % w});
        Tensor flow = Tensor::zeros({1, 2, h, w});
        for (int64_t i = 0; i < h * w; ++i) {
            flow.raw()[static_cast<size_t>(i)] = static_cast<double>(-vx);
            flow.raw()[static_cast<size_t>(h * w + i)] = static_cast<double>(-vy);
        }
        Tensor warped = warp_bilinear(prev, flow);
        const int64_t mx = std::abs(vx), my = std::abs(vy);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = my; y < h - my; ++y)
                for (int64_t x = mx; x < w - mx; ++x)
                    if (warped.at({0, ch, y, x}) != cur.at({0, ch, y, x})) {
                        detail = "interior mismatch at trial " + std::to_string(trial);
                        return false;
                    }
    }
    detail = "30 constant-velocity sequences reproduced exactly on the interior";
    return true;
}

// --- 9: end-to-end training signal ----------------------------------------------
struct EvalPoint {
    double bpp = 0.0;
    double psnr = 0.0;
};

EvalPoint evaluate_clip(const VideoCodec& codec, const Tensor& clip, bool zero_conditions) {
    auto res = codec.encode_video(clip, 8, 1, 0, zero_conditions, 1);
    auto dec = codec.decode_video(res.container, 1);
    EvalPoint p;
    p.bpp = res.bpp(clip.dim(3), clip.dim(2), clip.dim(0));
    p.psnr = video_metrics(clip, dec.frames).mean_psnr;
    return p;
}

bool criterion9(std::string& detail) {
    const int64_t steps = 5000;
    VideoCodec codec(CodecConfig::tiny(), 1);
    auto init_params = codec.params().serialize();

    auto dataset = make_synthetic_dataset(48, 5, 32, 1001);
    TrainOptions opts;
    opts.steps = steps;
    opts.seed = 7;
    opts.weights.lambda = 256.0;
    int64_t printed = 0;
    opts.on_step = [&](const TrainLogEntry& e) {
        if (e.step % 250 == 0) {
            std::printf("    step %lld rd %.4f rate_y %.4f rate_z %.4f mse %.6f\n",
                        static_cast<long long>(e.step), e.rd, e.rate_y, e.rate_z, e.distortion);
            std::fflush(stdout);
            ++printed;
        }
    };
    auto result = train_stage(codec, dataset, opts);

    // (a) window-50 smoothed loss, end vs start
    double start = 0.0, end = 0.0;
    for (int i = 0; i < 50; ++i) {
        start += result.history[static_cast<size_t>(i)].rd;
        end += result.history[result.history.size() - 50 + static_cast<size_t>(i)].rd;
    }
    start /= 50.0;
    end /= 50.0;
    if (!(end < start)) {
        detail = "smoothed rd did not decrease: start " + std::to_string(start) + ", end " +
                 std::to_string(end);
        return false;
    }

    // (b) held-out translational clip: trained must dominate the initialization
    SyntheticClipSpec held;
    held.kind = PatternKind::Gradient;
    held.vx = 1;
    held.vy = 0;
    held.frames = 8;
    held.width = 32;
    held.height = 32;
    held.seed = 424242;
    Tensor clip = make_clip(held);

    VideoCodec init_codec(CodecConfig::tiny(), 1);
    init_codec.params().deserialize(init_params);
    EvalPoint before = evaluate_clip(init_codec, clip, false);
    EvalPoint after = evaluate_clip(codec, clip, false);
    std::printf("    held-out: init %.4f bpp / %.2f dB -> trained %.4f bpp / %.2f dB\n",
                before.bpp, before.psnr, after.bpp, after.psnr);
    if (!(after.bpp < before.bpp && after.psnr >= before.psnr)) {
        detail = "trained model does not dominate its initialization";
        return false;
    }

    // (c) conditions ablation on translational held-out clips
    double bpp_cond = 0.0, bpp_nocond = 0.0;
    for (int i = 0; i < 4; ++i) {
        SyntheticClipSpec s;
        s.kind = i % 2 ? PatternKind::Checkerboard : PatternKind::Gradient;
        s.vx = (i % 2) ? -1 : 1;
        s.vy = (i / 2) ? 1 : 0;
        s.frames = 8;
        s.width = 32;
        s.height = 32;
        s.seed = 5000 + static_cast<uint64_t>(i);
        Tensor c = make_clip(s);
        bpp_cond += evaluate_clip(codec, c, false).bpp;
        bpp_nocond += evaluate_clip(codec, c, true).bpp;
    }
    bpp_cond /= 4.0;
    bpp_nocond /= 4.0;
    std::printf("    ablation: conditional %.4f bpp vs conditions-zeroed %.4f bpp\n", bpp_cond,
                bpp_nocond);
    if (!(bpp_cond < bpp_nocond)) {
        detail = "conditional entropy model did not beat the zeroed-condition variant (" +
                 std::to_string(bpp_cond) + " vs " + std::to_string(bpp_nocond) + ")";
        return false;
    }

    // keep the trained weights for inspection and reuse
    codec.params().save("acceptance_stage1.ckpt");
    detail = "rd " + std::to_string(start) + " -> " + std::to_string(end) + "; held-out " +
             std::to_string(before.bpp) + " -> " + std::to_string(after.bpp) + " bpp at " +
             std::to_string(after.psnr) + " dB; ablation " + std::to_string(bpp_cond) + " < " +
             std::to_string(bpp_nocond);
    (void)printed;
    return true;
}

// --- 10: protocol conformance -----------------------------------------------------
bool criterion10(std::string& detail) {
    // lambda grid and stage-2 defaults
    if (kLambdaGrid[0] != 128.0 || kLambdaGrid[1] != 256.0 || kLambdaGrid[2] != 512.0) {
        detail = "lambda grid is not {128, 256, 512}";
        return false;
    }
    LossWeights w;
    if (w.lambda_per != 1.0 || w.lambda_sty != 0.15) {
        detail = "stage-2 defaults are not lambda_per=1.0, lambda_sty=0.15";
        return false;
    }

    // 96-frame encode through the real CLI with --gop 8 -> exactly 12 GOPs
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / ("gtem_acc10_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Cleanup {
        fs::path d;
        ~Cleanup() { fs::remove_all(d); }
    } cleanup{dir};

    SyntheticClipSpec spec;
    spec.kind = PatternKind::Gradient;
    spec.vx = 1;
    spec.frames = 96;
    spec.width = 32;
    spec.height = 32;
    spec.seed = 10;
    Video v;
    v.frames = make_clip(spec);
    std::string input = (dir / "in.rgb24").string();
    write_raw_rgb24(input, v);

    VideoCodec codec(CodecConfig::tiny(), 1);
    std::string ckpt = (dir / "tiny.ckpt").string();
    codec.params().save(ckpt);

    std::string bin = (dir / "out.gtem").string();
    std::string cmd = std::string(GTEM_CLI_BIN) + " encode -i " + input + " -c " + ckpt + " -o " +
                      bin + " --gop 8 --preset tiny > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
        detail = "cli encode failed";
        return false;
    }
    std::ifstream f(bin, std::ios::binary | std::ios::ate);
    std::vector<uint8_t> bytes(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    auto parsed = parse_container(bytes);
    if (parsed.gops.size() != 12) {
        detail = "expected 12 GOP segments, found " + std::to_string(parsed.gops.size());
        return false;
    }
    if (parsed.header.frame_count != 96 || parsed.header.gop_size != 8) {
        detail = "header does not carry 96 frames at gop 8";
        return false;
    }
    detail = "12 GOP segments for 96 frames at gop 8; lambda grid and stage-2 defaults exact";
    return true;
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }

    std::vector<Criterion> criteria = {
        {1, "transform reversibility", criterion1},
        {2, "scan-order oracle", criterion2},
        {3, "selective-scan equivalence", criterion3},
        {4, "difference-convolution algebra", criterion4},
        {5, "gradient verification", criterion5},
        {6, "entropy-coding correctness", criterion6},
        {7, "decoder sufficiency", criterion7},
        {8, "motion-prior property", criterion8},
        {9, "end-to-end training signal", criterion9},
        {10, "protocol conformance", criterion10},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", c.id, c.title,
                    secs, detail.empty() ? "" : " - ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
