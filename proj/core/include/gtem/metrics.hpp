#pragma once

#include "gtem/tensor.hpp"

#include <vector>

namespace gtem {

inline constexpr double kPsnrCap = 99.0;

// PSNR over unit-interval intensities: 10 log10(1/MSE), capped at 99 dB.
double psnr(const Tensor& ref_frame, const Tensor& test_frame);

// Single-scale SSIM mean (and the contrast-structure mean) of one channel
// plane, 11x11 Gaussian window sigma 1.5, valid region only.
struct SsimResult {
    double ssim = 0.0;
    double cs = 0.0;
};
SsimResult ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int64_t h,
                      int64_t w);

// Multi-scale SSIM with the standard 5-scale weights. Images too small for
// all scales fall back to the scales that fit, weights renormalized.
double ms_ssim_plane(std::vector<double> a, std::vector<double> b, int64_t h, int64_t w);

// channel-averaged MS-SSIM of one (C,H,W) or (1,C,H,W) frame pair
double ms_ssim(const Tensor& ref_frame, const Tensor& test_frame);

struct VideoMetrics {
    std::vector<double> frame_psnr;
    std::vector<double> frame_ms_ssim;
    double mean_psnr = 0.0;
    double mean_ms_ssim = 0.0;
};

VideoMetrics video_metrics(const Tensor& reference, const Tensor& reconstruction);

} // namespace gtem
