#include "gtem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gtem {

using detail::check;

namespace {

constexpr int kWinSize = 11;
constexpr double kWinSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01; // (K1 L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;
const double kScaleWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

const std::vector<double>& gauss_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w(kWinSize);
        double sum = 0.0;
        for (int i = 0; i < kWinSize; ++i) {
            double d = i - (kWinSize - 1) / 2.0;
            w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kWinSigma * kWinSigma));
            sum += w[static_cast<size_t>(i)];
        }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return win;
}

// separable valid-region filter
std::vector<double> filter_valid(const std::vector<double>& img, int64_t h, int64_t w) {
    const auto& win = gauss_window();
    const int64_t oh = h - kWinSize + 1, ow = w - kWinSize + 1;
    std::vector<double> tmp(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWinSize; ++k) acc += win[static_cast<size_t>(k)] * img[static_cast<size_t>(y * w + x + k)];
            tmp[static_cast<size_t>(y * ow + x)] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWinSize; ++k) acc += win[static_cast<size_t>(k)] * tmp[static_cast<size_t>((y + k) * ow + x)];
            out[static_cast<size_t>(y * ow + x)] = acc;
        }
    return out;
}

std::vector<double> downsample2(const std::vector<double>& img, int64_t h, int64_t w,
                                int64_t& oh, int64_t& ow) {
    oh = h / 2;
    ow = w / 2;
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x)
            out[static_cast<size_t>(y * ow + x)] =
                0.25 * (img[static_cast<size_t>(2 * y * w + 2 * x)] +
                        img[static_cast<size_t>(2 * y * w + 2 * x + 1)] +
                        img[static_cast<size_t>((2 * y + 1) * w + 2 * x)] +
                        img[static_cast<size_t>((2 * y + 1) * w + 2 * x + 1)]);
    return out;
}

} // namespace

double psnr(const Tensor& ref_frame, const Tensor& test_frame) {
    check(ref_frame.shape() == test_frame.shape(), "psnr: dimension mismatch");
    double mse = 0.0;
    auto a = ref_frame.data();
    auto b = test_frame.data();
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

SsimResult ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int64_t h,
                      int64_t w) {
    check(h >= kWinSize && w >= kWinSize, "ssim: plane smaller than the filter window");
    auto mu1 = filter_valid(a, h, w);
    auto mu2 = filter_valid(b, h, w);
    std::vector<double> a2(a.size()), b2(b.size()), ab(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        a2[i] = a[i] * a[i];
        b2[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    auto s11 = filter_valid(a2, h, w);
    auto s22 = filter_valid(b2, h, w);
    auto s12 = filter_valid(ab, h, w);

    double ssim_acc = 0.0, cs_acc = 0.0;
    for (size_t i = 0; i < mu1.size(); ++i) {
        double m1 = mu1[i], m2 = mu2[i];
        double v1 = s11[i] - m1 * m1;
        double v2 = s22[i] - m2 * m2;
        double cv = s12[i] - m1 * m2;
        double cs = (2.0 * cv + kC2) / (v1 + v2 + kC2);
        double lum = (2.0 * m1 * m2 + kC1) / (m1 * m1 + m2 * m2 + kC1);
        cs_acc += cs;
        ssim_acc += lum * cs;
    }
    SsimResult r;
    r.ssim = ssim_acc / static_cast<double>(mu1.size());
    r.cs = cs_acc / static_cast<double>(mu1.size());
    return r;
}

double ms_ssim_plane(std::vector<double> a, std::vector<double> b, int64_t h, int64_t w) {
    check(h >= kWinSize && w >= kWinSize, "ms-ssim: image smaller than the filter window");
    int scales = 5;
    {
        int64_t th = h, tw = w;
        int fit = 1;
        while (fit < 5 && th / 2 >= kWinSize && tw / 2 >= kWinSize) {
            ++fit;
            th /= 2;
            tw /= 2;
        }
        scales = fit;
    }
    // the published weights are used raw at the full 5 scales; renormalize
    // only when small inputs force a reduced scale count
    double wsum = 1.0;
    if (scales < 5) {
        wsum = 0.0;
        for (int s = 0; s < scales; ++s) wsum += kScaleWeights[s];
    }

    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        SsimResult r = ssim_plane(a, b, h, w);
        double weight = kScaleWeights[s] / wsum;
        double term = (s == scales - 1) ? r.ssim : r.cs;
        term = std::max(term, 1e-12); // cs can be slightly negative on noise
        result *= std::pow(term, weight);
        if (s + 1 < scales) {
            int64_t nh, nw;
            a = downsample2(a, h, w, nh, nw);
            b = downsample2(b, h, w, nh, nw);
            h = nh;
            w = nw;
        }
    }
    return result;
}

double ms_ssim(const Tensor& ref_frame, const Tensor& test_frame) {
    check(ref_frame.shape() == test_frame.shape(), "ms-ssim: dimension mismatch");
    Shape s = ref_frame.shape();
    int64_t c, h, w;
    if (s.size() == 4) {
        check(s[0] == 1, "ms-ssim: one frame at a time");
        c = s[1];
        h = s[2];
        w = s[3];
    } else {
        check(s.size() == 3, "ms-ssim: frame must be (C,H,W)");
        c = s[0];
        h = s[1];
        w = s[2];
    }
    auto a = ref_frame.data();
    auto b = test_frame.data();
    double acc = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
        std::vector<double> pa(a.begin() + ch * h * w, a.begin() + (ch + 1) * h * w);
        std::vector<double> pb(b.begin() + ch * h * w, b.begin() + (ch + 1) * h * w);
        acc += ms_ssim_plane(std::move(pa), std::move(pb), h, w);
    }
    return acc / static_cast<double>(c);
}

VideoMetrics video_metrics(const Tensor& reference, const Tensor& reconstruction) {
    check(reference.shape() == reconstruction.shape(), "metrics: dimension mismatch");
    check(reference.rank() == 4, "metrics: videos must be (T,C,H,W)");
    VideoMetrics m;
    const int64_t t = reference.dim(0);
    for (int64_t f = 0; f < t; ++f) {
        Tensor rf = narrow(reference, 0, f, 1);
        Tensor tf = narrow(reconstruction, 0, f, 1);
        m.frame_psnr.push_back(psnr(rf, tf));
        m.frame_ms_ssim.push_back(ms_ssim(rf, tf));
    }
    for (double v : m.frame_psnr) m.mean_psnr += v;
    for (double v : m.frame_ms_ssim) m.mean_ms_ssim += v;
    m.mean_psnr /= static_cast<double>(t);
    m.mean_ms_ssim /= static_cast<double>(t);
    return m;
}

} // namespace gtem
