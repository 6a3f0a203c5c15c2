#include "gtem/ops.hpp"

#include <algorithm>
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
constexpr double kTwoOverSqrtPi = 1.12837916709551257390;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// elementwise op with value/derivative functions of the input value
template <typename F, typename DF>
Tensor unary_op(const Tensor& x, const char* name, F f, DF df) {
    std::vector<double> v(x.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = f(x.data()[i]);
    Tensor out = make_tensor(x.shape(), std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn, df](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(xn->value[i]);
        });
    }
    check_finite(out, name);
    return out;
}

} // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(w.rank() == 2, "linear: weight must be rank 2");
    check(x.rank() >= 1, "linear: input must have at least one axis");
    int64_t k = x.shape().back();
    check(k == w.dim(0), "linear: input width " + std::to_string(k) + " != weight rows " +
                             std::to_string(w.dim(0)));
    int64_t ko = w.dim(1);
    if (b.defined()) check(b.rank() == 1 && b.dim(0) == ko, "linear: bias shape mismatch");
    int64_t rows = x.numel() / k;

    Shape os = x.shape();
    os.back() = ko;
    std::vector<double> v(static_cast<size_t>(rows * ko), 0.0);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xd + r * k;
        double* outr = v.data() + r * ko;
        if (b.defined()) {
            const double* bd = b.data().data();
            for (int64_t j = 0; j < ko; ++j) outr[j] = bd[j];
        }
        for (int64_t i = 0; i < k; ++i) {
            double xv = xr[i];
            if (xv == 0.0) continue;
            const double* wr = wd + i * ko;
            for (int64_t j = 0; j < ko; ++j) outr[j] += xv * wr[j];
        }
    }
    Tensor out = make_tensor(std::move(os), std::move(v));

    if (wants_grad({&x, &w, &b})) {
        Node* xn = x.node.get();
        Node* wn = w.node.get();
        Node* bn = b.defined() ? b.node.get() : nullptr;
        std::vector<std::shared_ptr<Node>> parents{x.node, w.node};
        if (b.defined()) parents.push_back(b.node);
        attach(out, std::move(parents), [xn, wn, bn, rows, k, ko](const Node& o) {
            const double* og = o.grad.data();
            if (xn->requires_grad) {
                auto& gx = grad_buf(*xn);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t i = 0; i < k; ++i) {
                        const double* wr = wn->value.data() + i * ko;
                        const double* gr = og + r * ko;
                        double acc = 0.0;
                        for (int64_t j = 0; j < ko; ++j) acc += gr[j] * wr[j];
                        gx[static_cast<size_t>(r * k + i)] += acc;
                    }
            }
            if (wn->requires_grad) {
                auto& gw = grad_buf(*wn);
                for (int64_t r = 0; r < rows; ++r) {
                    const double* xr = xn->value.data() + r * k;
                    const double* gr = og + r * ko;
                    for (int64_t i = 0; i < k; ++i) {
                        double xv = xr[i];
                        if (xv == 0.0) continue;
                        double* gwr = gw.data() + i * ko;
                        for (int64_t j = 0; j < ko; ++j) gwr[j] += xv * gr[j];
                    }
                }
            }
            if (bn && bn->requires_grad) {
                auto& gb = grad_buf(*bn);
                for (int64_t r = 0; r < rows; ++r) {
                    const double* gr = og + r * ko;
                    for (int64_t j = 0; j < ko; ++j) gb[static_cast<size_t>(j)] += gr[j];
                }
            }
        });
    }
    check_finite(out, "linear");
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
    check(a.dim(1) == b.dim(0), "matmul: inner dimension mismatch");
    return linear(a, b, Tensor());
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Conv2dOpts& opts, const Tensor& bias) {
    check(x.rank() == 4, "conv2d: input must be (N,C,H,W)");
    check(k.rank() == 4, "conv2d: kernel must be rank 4");
    check(opts.stride >= 1, "conv2d: stride must be >= 1");
    check(opts.pad >= 0, "conv2d: pad must be >= 0");
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t kh = k.dim(2), kw = k.dim(3);
    check(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel must be odd-sized");
    check(kh <= h + 2 * opts.pad && kw <= w + 2 * opts.pad,
          "conv2d: kernel larger than padded input");
    int64_t co;
    if (opts.depthwise) {
        check(k.dim(0) == ci && k.dim(1) == 1, "conv2d: depthwise kernel must be (C,1,kh,kw)");
        co = ci;
    } else {
        check(k.dim(1) == ci, "conv2d: kernel input channels mismatch");
        co = k.dim(0);
    }
    if (bias.defined()) check(bias.rank() == 1 && bias.dim(0) == co, "conv2d: bias shape mismatch");
    const int64_t oh = (h + 2 * opts.pad - kh) / opts.stride + 1;
    const int64_t ow = (w + 2 * opts.pad - kw) / opts.stride + 1;

    std::vector<double> v(static_cast<size_t>(n * co * oh * ow), 0.0);
    const double* xd = x.data().data();
    const double* kd = k.data().data();
    const double* bd = bias.defined() ? bias.data().data() : nullptr;
    const int64_t s = opts.stride, p = opts.pad;

    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t oc = 0; oc < co; ++oc) {
            const int64_t ci_lo = opts.depthwise ? oc : 0;
            const int64_t ci_hi = opts.depthwise ? oc + 1 : ci;
            double* op = v.data() + (ni * co + oc) * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bd ? bd[oc] : 0.0;
                    for (int64_t ic = ci_lo; ic < ci_hi; ++ic) {
                        const double* xp = xd + (ni * ci + ic) * h * w;
                        const double* kp =
                            kd + (opts.depthwise ? oc : oc * ci + ic) * kh * kw;
                        for (int64_t u = 0; u < kh; ++u) {
                            int64_t iy = oy * s - p + u;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t vx = 0; vx < kw; ++vx) {
                                int64_t ix = ox * s - p + vx;
                                if (ix < 0 || ix >= w) continue;
                                acc += xp[iy * w + ix] * kp[u * kw + vx];
                            }
                        }
                    }
                    op[oy * ow + ox] = acc;
                }
        }
    Tensor out = make_tensor({n, co, oh, ow}, std::move(v));

    if (wants_grad({&x, &k, &bias})) {
        Node* xn = x.node.get();
        Node* kn = k.node.get();
        Node* bn = bias.defined() ? bias.node.get() : nullptr;
        std::vector<std::shared_ptr<Node>> parents{x.node, k.node};
        if (bias.defined()) parents.push_back(bias.node);
        Conv2dOpts o2 = opts;
        attach(out, std::move(parents),
               [xn, kn, bn, n, ci, h, w, co, kh, kw, oh, ow, o2](const Node& o) {
                   const int64_t s = o2.stride, p = o2.pad;
                   double* gx = xn->requires_grad ? grad_buf(*xn).data() : nullptr;
                   double* gk = kn->requires_grad ? grad_buf(*kn).data() : nullptr;
                   double* gb = (bn && bn->requires_grad) ? grad_buf(*bn).data() : nullptr;
                   for (int64_t ni = 0; ni < n; ++ni)
                       for (int64_t oc = 0; oc < co; ++oc) {
                           const int64_t ci_lo = o2.depthwise ? oc : 0;
                           const int64_t ci_hi = o2.depthwise ? oc + 1 : ci;
                           const double* gp = o.grad.data() + (ni * co + oc) * oh * ow;
                           for (int64_t oy = 0; oy < oh; ++oy)
                               for (int64_t ox = 0; ox < ow; ++ox) {
                                   double gv = gp[oy * ow + ox];
                                   if (gv == 0.0) continue;
                                   if (gb) gb[oc] += gv;
                                   for (int64_t ic = ci_lo; ic < ci_hi; ++ic) {
                                       const double* xp = xn->value.data() + (ni * ci + ic) * h * w;
                                       const int64_t koff =
                                           (o2.depthwise ? oc : oc * ci + ic) * kh * kw;
                                       const double* kp = kn->value.data() + koff;
                                       for (int64_t u = 0; u < kh; ++u) {
                                           int64_t iy = oy * s - p + u;
                                           if (iy < 0 || iy >= h) continue;
                                           for (int64_t vx = 0; vx < kw; ++vx) {
                                               int64_t ix = ox * s - p + vx;
                                               if (ix < 0 || ix >= w) continue;
                                               if (gx)
                                                   gx[(ni * ci + ic) * h * w + iy * w + ix] +=
                                                       gv * kp[u * kw + vx];
                                               if (gk)
                                                   gk[koff + u * kw + vx] += gv * xp[iy * w + ix];
                                           }
                                       }
                                   }
                               }
                       }
               });
    }
    check_finite(out, "conv2d");
    return out;
}

Tensor layernorm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    check(eps > 0.0, "layernorm: eps must be positive");
    check(x.rank() >= 2, "layernorm: need a channel axis");
    const int64_t c = x.dim(1);
    check(gamma.rank() == 1 && gamma.dim(0) == c, "layernorm: gamma shape mismatch");
    check(beta.rank() == 1 && beta.dim(0) == c, "layernorm: beta shape mismatch");
    int64_t outer = x.dim(0);
    int64_t inner = x.numel() / (outer * c);

    std::vector<double> v(x.data().size());
    std::vector<double> xhat(x.data().size());
    std::vector<double> inv_std(static_cast<size_t>(outer * inner));
    const double* xd = x.data().data();
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();
    for (int64_t ou = 0; ou < outer; ++ou)
        for (int64_t in = 0; in < inner; ++in) {
            double m = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) m += xd[(ou * c + ch) * inner + in];
            m /= static_cast<double>(c);
            double var = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) {
                double d = xd[(ou * c + ch) * inner + in] - m;
                var += d * d;
            }
            var /= static_cast<double>(c);
            double inv = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(ou * inner + in)] = inv;
            for (int64_t ch = 0; ch < c; ++ch) {
                size_t i = static_cast<size_t>((ou * c + ch) * inner + in);
                double xh = (xd[i] - m) * inv;
                xhat[i] = xh;
                v[i] = gd[ch] * xh + bd[ch];
            }
        }
    Tensor out = make_tensor(x.shape(), std::move(v));

    if (wants_grad({&x, &gamma, &beta})) {
        Node* xn = x.node.get();
        Node* gn = gamma.node.get();
        Node* bn = beta.node.get();
        attach(out, {x.node, gamma.node, beta.node},
               [xn, gn, bn, outer, inner, c, xhat = std::move(xhat),
                inv_std = std::move(inv_std)](const Node& o) {
                   const double* og = o.grad.data();
                   double* gx = xn->requires_grad ? grad_buf(*xn).data() : nullptr;
                   double* gg = gn->requires_grad ? grad_buf(*gn).data() : nullptr;
                   double* gb = bn->requires_grad ? grad_buf(*bn).data() : nullptr;
                   for (int64_t ou = 0; ou < outer; ++ou)
                       for (int64_t in = 0; in < inner; ++in) {
                           double mean_g = 0.0, mean_gx = 0.0;
                           for (int64_t ch = 0; ch < c; ++ch) {
                               size_t i = static_cast<size_t>((ou * c + ch) * inner + in);
                               double gy = og[i] * gn->value[static_cast<size_t>(ch)];
                               mean_g += gy;
                               mean_gx += gy * xhat[i];
                           }
                           mean_g /= static_cast<double>(c);
                           mean_gx /= static_cast<double>(c);
                           double inv = inv_std[static_cast<size_t>(ou * inner + in)];
                           for (int64_t ch = 0; ch < c; ++ch) {
                               size_t i = static_cast<size_t>((ou * c + ch) * inner + in);
                               if (gx) {
                                   double gy = og[i] * gn->value[static_cast<size_t>(ch)];
                                   gx[i] += inv * (gy - mean_g - xhat[i] * mean_gx);
                               }
                               if (gg) gg[ch] += og[i] * xhat[i];
                               if (gb) gb[ch] += og[i];
                           }
                       }
               });
    }
    check_finite(out, "layernorm");
    return out;
}

Tensor silu(const Tensor& x) {
    return unary_op(
        x, "silu", [](double v) { return v * sigmoid(v); },
        [](double v) {
            double s = sigmoid(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor gelu(const Tensor& x) {
    return unary_op(
        x, "gelu",
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [](double v) {
            double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            return phi + v * pdf;
        });
}

Tensor softplus(const Tensor& x) {
    return unary_op(
        x, "softplus",
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v) { return sigmoid(v); });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        x, "exp", [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
    return unary_op(
        x, "log", [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    // subgradient 0 at the domain boundary keeps norms of exact-zero
    // differences from poisoning a backward pass
    return unary_op(
        x, "sqrt", [](double v) { return std::sqrt(v); },
        [](double v) { return v > 0.0 ? 0.5 / std::sqrt(v) : 0.0; });
}

Tensor abs(const Tensor& x) {
    return unary_op(
        x, "abs", [](double v) { return std::abs(v); },
        [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor erf(const Tensor& x) {
    return unary_op(
        x, "erf", [](double v) { return std::erf(v); },
        [](double v) { return kTwoOverSqrtPi * std::exp(-v * v); });
}

Tensor clamp_min(const Tensor& x, double lo) {
    return unary_op(
        x, "clamp_min", [lo](double v) { return std::max(v, lo); },
        [lo](double v) { return v >= lo ? 1.0 : 0.0; });
}

Tensor clamp01(const Tensor& x) {
    return unary_op(
        x, "clamp01", [](double v) { return std::min(std::max(v, 0.0), 1.0); },
        [](double v) { return (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0; });
}

Tensor softmax_lastdim(const Tensor& x) {
    const int64_t cols = x.shape().back();
    const int64_t rows = x.numel() / cols;
    std::vector<double> v(x.data().size());
    const double* xd = x.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xd + r * cols;
        double* vr = v.data() + r * cols;
        double mx = xr[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            vr[j] = std::exp(xr[j] - mx);
            z += vr[j];
        }
        for (int64_t j = 0; j < cols; ++j) vr[j] /= z;
    }
    Tensor out = make_tensor(x.shape(), std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn, rows, cols](const Node& o) {
            auto& g = grad_buf(*xn);
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = o.value.data() + r * cols;
                const double* gy = o.grad.data() + r * cols;
                double dot = 0.0;
                for (int64_t j = 0; j < cols; ++j) dot += gy[j] * y[j];
                for (int64_t j = 0; j < cols; ++j)
                    g[static_cast<size_t>(r * cols + j)] += y[j] * (gy[j] - dot);
            }
        });
    }
    check_finite(out, "softmax");
    return out;
}

Tensor round_ste(const Tensor& x) {
    // straight-through: forward rounds (ties away from zero), gradient is 1
    return unary_op(
        x, "round_ste", [](double v) { return std::round(v); }, [](double) { return 1.0; });
}

Tensor plain_round(const Tensor& x) {
    if (grad_enabled() && x.requires_grad())
        throw std::runtime_error(
            "plain_round: rounding in a recording graph; use round_ste or the noise surrogate");
    std::vector<double> v(x.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::round(x.data()[i]);
    return make_tensor(x.shape(), std::move(v));
}

Tensor add_constant(const Tensor& x, const std::vector<double>& noise) {
    check(noise.size() == x.data().size(), "add_constant: size mismatch");
    std::vector<double> v(x.data().size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = x.data()[i] + noise[i];
    Tensor out = make_tensor(x.shape(), std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn](const Node& o) {
            auto& g = grad_buf(*xn);
            for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        });
    }
    check_finite(out, "add_constant");
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    check(x.rank() >= 2, "add_channel_bias: need a channel axis");
    return add(x, broadcast_channels(b, x.shape()));
}

Tensor nearest_upsample2(const Tensor& x) {
    check(x.rank() == 4, "nearest_upsample2: input must be (N,C,H,W)");
    return nearest_resize(x, x.dim(2) * 2, x.dim(3) * 2);
}

Tensor nearest_resize(const Tensor& x, int64_t oh, int64_t ow) {
    check(x.rank() == 4, "nearest_resize: input must be (N,C,H,W)");
    check(oh >= 1 && ow >= 1, "nearest_resize: invalid target size");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<int64_t> src_y(static_cast<size_t>(oh)), src_x(static_cast<size_t>(ow));
    for (int64_t y = 0; y < oh; ++y) src_y[static_cast<size_t>(y)] = std::min(h - 1, y * h / oh);
    for (int64_t xx = 0; xx < ow; ++xx)
        src_x[static_cast<size_t>(xx)] = std::min(w - 1, xx * w / ow);

    std::vector<double> v(static_cast<size_t>(n * c * oh * ow));
    const double* xd = x.data().data();
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double* xp = xd + nc * h * w;
        double* op = v.data() + nc * oh * ow;
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xx = 0; xx < ow; ++xx)
                op[y * ow + xx] = xp[src_y[static_cast<size_t>(y)] * w + src_x[static_cast<size_t>(xx)]];
    }
    Tensor out = make_tensor({n, c, oh, ow}, std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node},
               [xn, n, c, h, w, oh, ow, src_y = std::move(src_y), src_x = std::move(src_x)](const Node& o) {
                   auto& g = grad_buf(*xn);
                   for (int64_t nc = 0; nc < n * c; ++nc) {
                       double* gp = g.data() + nc * h * w;
                       const double* op = o.grad.data() + nc * oh * ow;
                       for (int64_t y = 0; y < oh; ++y)
                           for (int64_t xx = 0; xx < ow; ++xx)
                               gp[src_y[static_cast<size_t>(y)] * w +
                                  src_x[static_cast<size_t>(xx)]] += op[y * ow + xx];
                   }
               });
    }
    return out;
}

Tensor zero_pad2d(const Tensor& x, int64_t top, int64_t bottom, int64_t left, int64_t right) {
    check(x.rank() == 4, "zero_pad2d: input must be (N,C,H,W)");
    check(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "zero_pad2d: negative pad");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = h + top + bottom, ow = w + left + right;
    std::vector<double> v(static_cast<size_t>(n * c * oh * ow), 0.0);
    const double* xd = x.data().data();
    for (int64_t nc = 0; nc < n * c; ++nc)
        for (int64_t y = 0; y < h; ++y) {
            const double* src = xd + (nc * h + y) * w;
            double* dst = v.data() + (nc * oh + y + top) * ow + left;
            std::copy(src, src + w, dst);
        }
    Tensor out = make_tensor({n, c, oh, ow}, std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn, n, c, h, w, oh, ow, top, left](const Node& o) {
            auto& g = grad_buf(*xn);
            for (int64_t nc = 0; nc < n * c; ++nc)
                for (int64_t y = 0; y < h; ++y) {
                    const double* src = o.grad.data() + (nc * oh + y + top) * ow + left;
                    double* dst = g.data() + (nc * h + y) * w;
                    for (int64_t xx = 0; xx < w; ++xx) dst[xx] += src[xx];
                }
        });
    }
    return out;
}

Tensor replicate_pad2d(const Tensor& x, int64_t pad) {
    check(x.rank() == 4, "replicate_pad2d: input must be (N,C,H,W)");
    check(pad >= 0, "replicate_pad2d: negative pad");
    if (pad == 0) return reshape(x, x.shape());
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = h + 2 * pad, ow = w + 2 * pad;
    std::vector<double> v(static_cast<size_t>(n * c * oh * ow));
    std::vector<int64_t> map(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y) {
        int64_t sy = std::min(std::max<int64_t>(y - pad, 0), h - 1);
        for (int64_t xx = 0; xx < ow; ++xx) {
            int64_t sx = std::min(std::max<int64_t>(xx - pad, 0), w - 1);
            map[static_cast<size_t>(y * ow + xx)] = sy * w + sx;
        }
    }
    const double* xd = x.data().data();
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double* xp = xd + nc * h * w;
        double* op = v.data() + nc * oh * ow;
        for (int64_t i = 0; i < oh * ow; ++i) op[i] = xp[map[static_cast<size_t>(i)]];
    }
    Tensor out = make_tensor({n, c, oh, ow}, std::move(v));
    if (wants_grad({&x})) {
        Node* xn = x.node.get();
        attach(out, {x.node}, [xn, n, c, h, w, oh, ow, map = std::move(map)](const Node& o) {
            auto& g = grad_buf(*xn);
            for (int64_t nc = 0; nc < n * c; ++nc) {
                double* gp = g.data() + nc * h * w;
                const double* op = o.grad.data() + nc * oh * ow;
                for (int64_t i = 0; i < oh * ow; ++i) gp[map[static_cast<size_t>(i)]] += op[i];
            }
        });
    }
    return out;
}

Tensor warp_bilinear(const Tensor& feature, const Tensor& flow) {
    check(feature.rank() == 4, "warp: feature must be (N,C,H,W)");
    check(flow.rank() == 4 && flow.dim(1) == 2, "warp: flow must be (N,2,H,W)");
    check(flow.dim(0) == feature.dim(0) && flow.dim(2) == feature.dim(2) &&
              flow.dim(3) == feature.dim(3),
          "warp: flow spatial dims must equal feature dims");
    const int64_t n = feature.dim(0), c = feature.dim(1), h = feature.dim(2), w = feature.dim(3);
    const double* fd = feature.data().data();
    const double* fl = flow.data().data();

    std::vector<double> v(feature.data().size());
    // per position: x0,y0, fx, fy and clamp flags, reused by backward
    struct Samp {
        int32_t x0, y0, x1, y1;
        double fx, fy;
        bool gx, gy; // flow gradient gates (false when clamped)
    };
    std::vector<Samp> samp(static_cast<size_t>(n * h * w));

    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                size_t pi = static_cast<size_t>((ni * h + y) * w + xx);
                double dx = fl[((ni * 2 + 0) * h + y) * w + xx];
                double dy = fl[((ni * 2 + 1) * h + y) * w + xx];
                double sx = static_cast<double>(xx) + dx;
                double sy = static_cast<double>(y) + dy;
                bool gx = sx > 0.0 && sx < static_cast<double>(w - 1);
                bool gy = sy > 0.0 && sy < static_cast<double>(h - 1);
                sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
                sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
                int64_t x0 = static_cast<int64_t>(std::floor(sx));
                int64_t y0 = static_cast<int64_t>(std::floor(sy));
                if (x0 > w - 1) x0 = w - 1;
                if (y0 > h - 1) y0 = h - 1;
                int64_t x1 = std::min(x0 + 1, w - 1);
                int64_t y1 = std::min(y0 + 1, h - 1);
                double fx = sx - static_cast<double>(x0);
                double fy = sy - static_cast<double>(y0);
                samp[pi] = {static_cast<int32_t>(x0), static_cast<int32_t>(y0),
                            static_cast<int32_t>(x1), static_cast<int32_t>(y1), fx, fy, gx, gy};
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double* fp = fd + (ni * c + ch) * h * w;
                    double a = fp[y0 * w + x0], b = fp[y0 * w + x1];
                    double cc = fp[y1 * w + x0], d = fp[y1 * w + x1];
                    v[static_cast<size_t>(((ni * c + ch) * h + y) * w + xx)] =
                        (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * cc + fx * d);
                }
            }
    Tensor out = make_tensor(feature.shape(), std::move(v));

    if (wants_grad({&feature, &flow})) {
        Node* fn = feature.node.get();
        Node* fln = flow.node.get();
        attach(out, {feature.node, flow.node},
               [fn, fln, n, c, h, w, samp = std::move(samp)](const Node& o) {
                   double* gf = fn->requires_grad ? grad_buf(*fn).data() : nullptr;
                   double* gl = fln->requires_grad ? grad_buf(*fln).data() : nullptr;
                   for (int64_t ni = 0; ni < n; ++ni)
                       for (int64_t y = 0; y < h; ++y)
                           for (int64_t xx = 0; xx < w; ++xx) {
                               const Samp& s = samp[static_cast<size_t>((ni * h + y) * w + xx)];
                               double dsx = 0.0, dsy = 0.0;
                               for (int64_t ch = 0; ch < c; ++ch) {
                                   const double* fp = fn->value.data() + (ni * c + ch) * h * w;
                                   double go =
                                       o.grad[static_cast<size_t>(((ni * c + ch) * h + y) * w + xx)];
                                   if (go == 0.0) continue;
                                   double a = fp[s.y0 * w + s.x0], b = fp[s.y0 * w + s.x1];
                                   double cc = fp[s.y1 * w + s.x0], d = fp[s.y1 * w + s.x1];
                                   if (gf) {
                                       double* gp = gf + (ni * c + ch) * h * w;
                                       gp[s.y0 * w + s.x0] += go * (1.0 - s.fy) * (1.0 - s.fx);
                                       gp[s.y0 * w + s.x1] += go * (1.0 - s.fy) * s.fx;
                                       gp[s.y1 * w + s.x0] += go * s.fy * (1.0 - s.fx);
                                       gp[s.y1 * w + s.x1] += go * s.fy * s.fx;
                                   }
                                   dsx += go * ((1.0 - s.fy) * (b - a) + s.fy * (d - cc));
                                   dsy += go * ((1.0 - s.fx) * (cc - a) + s.fx * (d - b));
                               }
                               if (gl) {
                                   if (s.gx) gl[((ni * 2 + 0) * h + y) * w + xx] += dsx;
                                   if (s.gy) gl[((ni * 2 + 1) * h + y) * w + xx] += dsy;
                               }
                           }
               });
    }
    check_finite(out, "warp");
    return out;
}

} // namespace gtem
