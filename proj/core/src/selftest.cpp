#include "gtem/selftest.hpp"

#include "gtem/entropy.hpp"
#include "gtem/locality.hpp"
#include "gtem/pipeline.hpp"
#include "gtem/scan.hpp"
#include "gtem/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

namespace gtem {

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(shape_numel(s)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(s), std::move(v));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i)
        if (ad[i] != bd[i]) return false;
    return true;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i) {
        double denom = std::max({std::abs(ad[i]), std::abs(bd[i]), 1e-12});
        worst = std::max(worst, std::abs(ad[i] - bd[i]) / denom);
    }
    return worst;
}

bool check_transform_reversibility(Rng& rng, std::string& detail) {
    const ScanOrder orders[4] = {ScanOrder::FST, ScanOrder::BST, ScanOrder::FTS, ScanOrder::BTS};
    for (int trial = 0; trial < 60; ++trial) {
        Shape s = {1 + static_cast<int64_t>(rng.below(3)), 1 + static_cast<int64_t>(rng.below(4)),
                   1 + static_cast<int64_t>(rng.below(5)), 1 + static_cast<int64_t>(rng.below(5))};
        Tensor x = random_tensor(s, rng);
        for (ScanOrder k : orders) {
            Tensor y = inverse_transform(apply_transform(x, k), k, s);
            if (!bit_equal(x, y)) {
                detail = std::string("round trip broke for ") + scan_order_name(k);
                return false;
            }
        }
    }
    return true;
}

bool check_scan_order_oracle(std::string& detail) {
    // brute-force enumeration oracle for a (T=3,H=2,W=2) feature
    const int64_t t = 3, h = 2, w = 2;
    std::vector<std::array<int64_t, 3>> fst_expect, fts_expect;
    for (int64_t f = 0; f < t; ++f)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) fst_expect.push_back({f, y, x});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t f = 0; f < t; ++f) fts_expect.push_back({f, y, x});
    if (scan_index_order(ScanOrder::FST, t, h, w) != fst_expect) {
        detail = "FST order mismatch";
        return false;
    }
    if (scan_index_order(ScanOrder::FTS, t, h, w) != fts_expect) {
        detail = "FTS order mismatch";
        return false;
    }
    auto bst = scan_index_order(ScanOrder::BST, t, h, w);
    std::reverse(bst.begin(), bst.end());
    if (bst != fst_expect) {
        detail = "BST is not the reversed FST order";
        return false;
    }
    auto bts = scan_index_order(ScanOrder::BTS, t, h, w);
    std::reverse(bts.begin(), bts.end());
    if (bts != fts_expect) {
        detail = "BTS is not the reversed FTS order";
        return false;
    }

    // the tensor path agrees with the index oracle: tag every (t,h,w) cell
    Tensor x = Tensor::zeros({t, 1, h, w});
    {
        auto d = x.raw();
        for (int64_t f = 0; f < t; ++f)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < w; ++xx)
                    d[static_cast<size_t>((f * h + y) * w + xx)] =
                        static_cast<double>(f * 100 + y * 10 + xx);
    }
    for (ScanOrder k : {ScanOrder::FST, ScanOrder::FTS, ScanOrder::BST, ScanOrder::BTS}) {
        Tensor tr = apply_transform(x, k);
        auto seq = scan_index_order(k, t, h, w);
        auto d = tr.data();
        for (size_t i = 0; i < seq.size(); ++i) {
            double expect = static_cast<double>(seq[i][0] * 100 + seq[i][1] * 10 + seq[i][2]);
            if (d[i] != expect) {
                detail = std::string("flattened ") + scan_order_name(k) +
                         " disagrees with the enumeration oracle";
                return false;
            }
        }
    }
    return true;
}

bool check_scan_recurrence(Rng& rng, std::string& detail) {
    for (int trial = 0; trial < 25; ++trial) {
        const int64_t l = 1 + static_cast<int64_t>(rng.below(256));
        const int64_t c = 1 + static_cast<int64_t>(rng.below(6));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(8));
        Tensor u = random_tensor({l, c}, rng);
        Tensor delta = random_tensor({l, c}, rng, 0.01, 0.5);
        Tensor b = random_tensor({l, n}, rng);
        Tensor cm = random_tensor({l, n}, rng);
        Tensor a = random_tensor({c, n}, rng, -2.0, -0.05);
        Tensor d = random_tensor({c}, rng);
        Tensor fast = selective_scan(u, delta, b, cm, a, d);

        // naive element-by-element recurrence
        std::vector<double> h(static_cast<size_t>(c * n), 0.0);
        double worst = 0.0;
        for (int64_t t = 0; t < l; ++t)
            for (int64_t cc = 0; cc < c; ++cc) {
                double acc = 0.0;
                for (int64_t k = 0; k < n; ++k) {
                    double ab = std::exp(delta.at({t, cc}) * a.at({cc, k}));
                    double& hv = h[static_cast<size_t>(cc * n + k)];
                    hv = ab * hv + delta.at({t, cc}) * b.at({t, k}) * u.at({t, cc});
                    acc += cm.at({t, k}) * hv;
                }
                acc += d.at({cc}) * u.at({t, cc});
                double got = fast.at({t, cc});
                double denom = std::max({std::abs(acc), std::abs(got), 1e-12});
                worst = std::max(worst, std::abs(acc - got) / denom);
            }
        if (worst >= 1e-10) {
            detail = "recurrence mismatch, rel err " + std::to_string(worst);
            return false;
        }
    }
    return true;
}

bool check_kernel_merge(Rng& rng, bool inject_bug, std::string& detail) {
    for (int trial = 0; trial < 40; ++trial) {
        const int64_t c = 1 + static_cast<int64_t>(rng.below(4));
        ParamStore store;
        Rng wrng(rng.next_u64());
        HcbWeights w;
        w.init(store, "hcb", c, wrng);
        Tensor x = random_tensor({1, c, 6, 6}, rng);

        Tensor merged = hcb_merged_kernel(w);
        if (inject_bug) {
            // fixture fault: drop the central-difference adjustment
            Tensor wrong = rewrite_kernel(w.k_central, DiffConvKind::Vanilla);
            merged = add(sub(merged, rewrite_kernel(w.k_central, DiffConvKind::Central)), wrong);
        }
        Tensor via_branches = hcb_branch_sum(x, w);
        Tensor via_merged = hcb_merged_conv(x, merged);
        double err = max_rel_err(via_branches, via_merged);
        if (err >= 1e-10) {
            detail = "branch sum vs merged kernel, rel err " + std::to_string(err);
            return false;
        }

        // difference branches vanish on constants
        Tensor flat = Tensor::full({1, c, 6, 6}, 0.37);
        for (DiffConvKind k : {DiffConvKind::Central, DiffConvKind::Vertical,
                               DiffConvKind::Horizontal, DiffConvKind::Angular}) {
            Tensor out = diff_conv(flat, w.k_central, k);
            for (double v : out.data())
                if (std::abs(v) >= 1e-12) {
                    detail = "difference branch non-zero on a constant input";
                    return false;
                }
        }
    }
    return true;
}

bool check_coder_roundtrip(Rng& rng, std::string& detail) {
    std::vector<int64_t> symbols(20000);
    std::vector<double> mus(symbols.size()), sigmas(symbols.size());
    for (size_t i = 0; i < symbols.size(); ++i) {
        mus[i] = rng.uniform(-4.0, 4.0);
        sigmas[i] = rng.uniform(0.05, 8.0);
        double draw = mus[i] + sigmas[i] * rng.normal();
        if (rng.below(500) == 0) draw += rng.uniform(-2000.0, 2000.0); // force escapes
        symbols[i] = std::llround(draw);
    }
    std::vector<uint8_t> bytes;
    {
        RangeEncoder enc(bytes);
        CdfTable t;
        for (size_t i = 0; i < symbols.size(); ++i) {
            build_cdf_into(mus[i], sigmas[i], kDefaultAlphabetBound, t);
            encode_value(enc, symbols[i], t);
        }
        enc.finish();
    }
    RangeDecoder dec(bytes.data(), bytes.size());
    CdfTable t;
    for (size_t i = 0; i < symbols.size(); ++i) {
        build_cdf_into(mus[i], sigmas[i], kDefaultAlphabetBound, t);
        if (decode_value(dec, t) != symbols[i]) {
            detail = "symbol mismatch at " + std::to_string(i);
            return false;
        }
    }
    return true;
}

bool check_gradients(Rng& rng, std::string& detail) {
    // fast finite-difference spot checks on the composite blocks
    auto fd_check = [&](const std::function<Tensor()>& forward, Tensor probe_target,
                        int probes, double tol, const char* what) -> bool {
        probe_target.clear_grad();
        Tensor out = forward();
        Tensor weights = random_tensor(out.shape(), rng);
        Tensor scalar = sum(mul(out, weights));
        backward(scalar, false);
        auto grad = probe_target.grad();
        const double h = 1e-5;
        for (int p = 0; p < probes; ++p) {
            size_t idx = static_cast<size_t>(rng.below(static_cast<uint64_t>(probe_target.numel())));
            double orig = probe_target.data()[idx];
            probe_target.raw()[idx] = orig + h;
            double up = sum(mul(forward(), weights)).item();
            probe_target.raw()[idx] = orig - h;
            double dn = sum(mul(forward(), weights)).item();
            probe_target.raw()[idx] = orig;
            double fd = (up - dn) / (2.0 * h);
            double an = grad[idx];
            double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
            if (err >= tol) {
                detail = std::string(what) + ": fd " + std::to_string(fd) + " vs analytic " +
                         std::to_string(an);
                return false;
            }
        }
        probe_target.clear_grad();
        return true;
    };

    {
        ParamStore store;
        Rng wrng(11);
        GtmbWeights w;
        w.init(store, "g", 4, 4, wrng);
        Tensor x = random_tensor({2, 4, 3, 3}, rng).set_requires_grad(true);
        if (!fd_check([&] { return gtmb(x, ScanOrder::BTS, w); }, x, 10, 1e-4, "gtmb")) return false;
    }
    {
        ParamStore store;
        Rng wrng(12);
        LrffnWeights w;
        w.init(store, "l", 4, 8, wrng);
        Tensor x = random_tensor({1, 4, 4, 4}, rng).set_requires_grad(true);
        if (!fd_check([&] { return lrffn(x, w); }, x, 10, 1e-4, "lrffn")) return false;
    }
    {
        Tensor feat = random_tensor({1, 3, 5, 5}, rng).set_requires_grad(true);
        Tensor flow = random_tensor({1, 2, 5, 5}, rng, -0.4, 0.4).set_requires_grad(true);
        if (!fd_check([&] { return warp_bilinear(feat, flow); }, flow, 10, 1e-4, "warp")) return false;
    }
    return true;
}

bool check_decoder_sufficiency(Rng& rng, std::string& detail) {
    CodecConfig cfg = CodecConfig::tiny();
    cfg.stage_channels = {8, 8, 8};
    cfg.latent_channels = 10;
    cfg.hyper_channels = 4;
    cfg.hyper_feat_channels = 4;
    cfg.slice_hidden = 6;
    cfg.cgn_channels = 8;
    cfg.motion_channels = 8;
    cfg.state_dim = 4;
    VideoCodec codec(cfg, 99);
    for (int trial = 0; trial < 2; ++trial) {
        Tensor x = random_tensor({3, 3, 32, 32}, rng, 0.0, 1.0);
        auto enc = codec.encode_gop(x, false, false);
        Tensor decoded = codec.entropy().decode_gop(enc.segments, 3, 2, 2, false);
        if (!bit_equal(enc.y_refined, decoded)) {
            detail = "refined latents differ between encode and decode paths";
            return false;
        }
    }
    return true;
}

bool check_motion_prior(Rng& rng, std::string& detail) {
    // constant-velocity latent sequences: warping by the true previous motion
    // reproduces the next latent exactly away from the border
    const int64_t c = 4, h = 8, w = 8;
    for (int trial = 0; trial < 8; ++trial) {
        int64_t vx = static_cast<int64_t>(rng.below(3)) - 1;
        int64_t vy = static_cast<int64_t>(rng.below(3)) - 1;
        Tensor prev = random_tensor({1, c, h, w}, rng);
        Tensor cur = Tensor::zeros({1, c, h, w});
        {
            auto pd = prev.data();
            auto cd = cur.raw();
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) {
                        int64_t sy = (y - vy + h) % h;
                        int64_t sx = (x - vx + w) % w;
                        cd[static_cast<size_t>((ch * h + y) * w + x)] =
                            pd[static_cast<size_t>((ch * h + sy) * w + sx)];
                    }
        }
        Tensor flow = Tensor::zeros({1, 2, h, w});
        {
            auto fd = flow.raw();
            for (int64_t i = 0; i < h * w; ++i) {
                fd[static_cast<size_t>(i)] = static_cast<double>(-vx);
                fd[static_cast<size_t>(h * w + i)] = static_cast<double>(-vy);
            }
        }
        Tensor warped = warp_bilinear(prev, flow);
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 1; y < h - 1; ++y)
                for (int64_t x = 1; x < w - 1; ++x)
                    if (warped.at({0, ch, y, x}) != cur.at({0, ch, y, x})) {
                        detail = "interior mismatch after warping by the true motion";
                        return false;
                    }
    }
    return true;
}

} // namespace

SelftestReport run_selftest(const SelftestOptions& opts) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(opts.seed);
    SelftestReport report;

    auto run = [&](const char* name, const std::function<bool(std::string&)>& fn) {
        SelftestCheck c;
        c.name = name;
        c.passed = fn(c.detail);
        if (opts.verbose)
            std::printf("[%s] %s%s%s\n", c.passed ? "PASS" : "FAIL", name,
                        c.detail.empty() ? "" : ": ", c.detail.c_str());
        report.checks.push_back(std::move(c));
    };

    run("transform reversibility", [&](std::string& d) { return check_transform_reversibility(rng, d); });
    run("scan order oracle", [&](std::string& d) { return check_scan_order_oracle(d); });
    run("selective scan recurrence", [&](std::string& d) { return check_scan_recurrence(rng, d); });
    run("kernel merge algebra",
        [&](std::string& d) { return check_kernel_merge(rng, opts.inject_kernel_bug, d); });
    run("range coder round trip", [&](std::string& d) { return check_coder_roundtrip(rng, d); });
    run("gradient spot checks", [&](std::string& d) { return check_gradients(rng, d); });
    run("decoder sufficiency", [&](std::string& d) { return check_decoder_sufficiency(rng, d); });
    run("motion prior property", [&](std::string& d) { return check_motion_prior(rng, d); });

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace gtem
