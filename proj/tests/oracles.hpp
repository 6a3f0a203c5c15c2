// Test-only oracles, independent of the library implementation paths they
// check: naive dense kernels, quadrature-based normal CDF, a from-scratch
// MS-SSIM, and the central finite-difference harness.
#pragma once

#include "gtem/rng.hpp"
#include "gtem/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracles {

inline gtem::Tensor random_tensor(gtem::Shape s, gtem::Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(gtem::shape_numel(s)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return gtem::Tensor::from(std::move(s), std::move(v));
}

inline bool bit_equal(const gtem::Tensor& a, const gtem::Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (size_t i = 0; i < a.data().size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

inline double max_rel_err(const gtem::Tensor& a, const gtem::Tensor& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i) {
        double x = a.data()[i], y = b.data()[i];
        double denom = std::max({std::abs(x), std::abs(y), 1e-12});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

// triple-loop affine map over the last axis
inline std::vector<double> naive_linear(const std::vector<double>& x, int64_t rows, int64_t k,
                                        const std::vector<double>& w, int64_t ko,
                                        const std::vector<double>& b) {
    std::vector<double> out(static_cast<size_t>(rows * ko), 0.0);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < ko; ++j) {
            double acc = b.empty() ? 0.0 : b[static_cast<size_t>(j)];
            for (int64_t i = 0; i < k; ++i)
                acc += x[static_cast<size_t>(r * k + i)] * w[static_cast<size_t>(i * ko + j)];
            out[static_cast<size_t>(r * ko + j)] = acc;
        }
    return out;
}

// sliding-window cross-correlation with zero padding, dense or depthwise
inline gtem::Tensor naive_conv2d(const gtem::Tensor& x, const gtem::Tensor& k, int64_t stride,
                                 int64_t pad, bool depthwise,
                                 const gtem::Tensor& bias = gtem::Tensor()) {
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t kh = k.dim(2), kw = k.dim(3);
    const int64_t co = depthwise ? ci : k.dim(0);
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (w + 2 * pad - kw) / stride + 1;
    gtem::Tensor out = gtem::Tensor::zeros({n, co, oh, ow});
    auto od = out.raw();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t oc = 0; oc < co; ++oc)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.defined() ? bias.at({oc}) : 0.0;
                    for (int64_t ic = depthwise ? oc : 0; ic < (depthwise ? oc + 1 : ci); ++ic)
                        for (int64_t u = 0; u < kh; ++u)
                            for (int64_t v = 0; v < kw; ++v) {
                                int64_t iy = oy * stride - pad + u;
                                int64_t ix = ox * stride - pad + v;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                double kv = depthwise ? k.at({oc, 0, u, v}) : k.at({oc, ic, u, v});
                                acc += x.at({ni, ic, iy, ix}) * kv;
                            }
                    od[static_cast<size_t>(((ni * co + oc) * oh + oy) * ow + ox)] = acc;
                }
    return out;
}

// adaptive-Simpson integration of the standard normal density; independent of
// std::erf so it can serve as the high-precision CDF oracle
inline double normal_pdf(double x) { return 0.39894228040143267794 * std::exp(-0.5 * x * x); }

inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2) ++n;
    double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

inline double normal_cdf_oracle(double x) {
    if (x < -12.0) return 0.0;
    if (x > 12.0) return 1.0;
    if (x >= 0.0) return 0.5 + simpson(normal_pdf, 0.0, x, 4000);
    return 0.5 - simpson(normal_pdf, x, 0.0, 4000);
}

inline double interval_mass_oracle(double y, double mu, double sigma) {
    return normal_cdf_oracle((y - mu + 0.5) / sigma) - normal_cdf_oracle((y - mu - 0.5) / sigma);
}

// Central finite-difference gradient check. Builds loss = sum(out * proj) with
// a fixed random projection, runs backward once, then probes random
// coordinates of `target`.
struct FdReport {
    double worst_rel = 0.0;
    int probes = 0;
};

inline FdReport fd_gradcheck(const std::function<gtem::Tensor()>& forward, gtem::Tensor target,
                             int probes, gtem::Rng& rng, double h = 1e-5) {
    target.clear_grad();
    gtem::Tensor out = forward();
    gtem::Tensor proj = random_tensor(out.shape(), rng);
    gtem::backward(gtem::sum(gtem::mul(out, proj)), false);
    std::vector<double> analytic(target.grad_raw().begin(), target.grad_raw().end());

    FdReport rep;
    rep.probes = probes;
    for (int p = 0; p < probes; ++p) {
        size_t idx = static_cast<size_t>(rng.below(static_cast<uint64_t>(target.numel())));
        double orig = target.data()[idx];
        target.raw()[idx] = orig + h;
        double up;
        {
            gtem::NoGradGuard ng;
            up = gtem::sum(gtem::mul(forward(), proj)).item();
        }
        target.raw()[idx] = orig - h;
        double dn;
        {
            gtem::NoGradGuard ng;
            dn = gtem::sum(gtem::mul(forward(), proj)).item();
        }
        target.raw()[idx] = orig;
        double fd = (up - dn) / (2.0 * h);
        double an = analytic[idx];
        double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
        rep.worst_rel = std::max(rep.worst_rel, rel);
    }
    target.clear_grad();
    return rep;
}

} // namespace oracles
