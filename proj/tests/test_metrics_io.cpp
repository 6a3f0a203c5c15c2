#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gtem/metrics.hpp"
#include "gtem/pipeline.hpp"
#include "gtem/trainer.hpp"
#include "gtem/video_io.hpp"

#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace gtem;
using oracles::random_tensor;

namespace {

// Reference MS-SSIM, written directly from the formula with a full 2D window
// and no shared code with metrics.cpp.
namespace ref {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.0001, kC2 = 0.0009;
const double kW[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::vector<double> window() {
    std::vector<double> w(kWin * kWin);
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
            double dy = y - 5.0, dx = x - 5.0;
            w[static_cast<size_t>(y * kWin + x)] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
            sum += w[static_cast<size_t>(y * kWin + x)];
        }
    for (auto& v : w) v /= sum;
    return w;
}

struct Pair {
    double ssim, cs;
};

Pair ssim(const std::vector<double>& a, const std::vector<double>& b, int64_t h, int64_t w) {
    auto win = window();
    double sacc = 0.0, cacc = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + kWin <= h; ++y)
        for (int64_t x = 0; x + kWin <= w; ++x) {
            double m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
            for (int u = 0; u < kWin; ++u)
                for (int v = 0; v < kWin; ++v) {
                    double wv = win[static_cast<size_t>(u * kWin + v)];
                    double av = a[static_cast<size_t>((y + u) * w + x + v)];
                    double bv = b[static_cast<size_t>((y + u) * w + x + v)];
                    m1 += wv * av;
                    m2 += wv * bv;
                    s11 += wv * av * av;
                    s22 += wv * bv * bv;
                    s12 += wv * av * bv;
                }
            double v1 = s11 - m1 * m1, v2 = s22 - m2 * m2, cv = s12 - m1 * m2;
            double cs = (2 * cv + kC2) / (v1 + v2 + kC2);
            sacc += ((2 * m1 * m2 + kC1) / (m1 * m1 + m2 * m2 + kC1)) * cs;
            cacc += cs;
            ++count;
        }
    return {sacc / count, cacc / count};
}

double ms_ssim(std::vector<double> a, std::vector<double> b, int64_t h, int64_t w) {
    double result = 1.0;
    for (int s = 0; s < 5; ++s) {
        Pair p = ssim(a, b, h, w);
        result *= std::pow(std::max(s == 4 ? p.ssim : p.cs, 1e-12), kW[s]);
        if (s < 4) {
            int64_t nh = h / 2, nw = w / 2;
            std::vector<double> na(static_cast<size_t>(nh * nw)), nb(na.size());
            for (int64_t y = 0; y < nh; ++y)
                for (int64_t x = 0; x < nw; ++x) {
                    na[static_cast<size_t>(y * nw + x)] =
                        0.25 * (a[static_cast<size_t>(2 * y * w + 2 * x)] +
                                a[static_cast<size_t>(2 * y * w + 2 * x + 1)] +
                                a[static_cast<size_t>((2 * y + 1) * w + 2 * x)] +
                                a[static_cast<size_t>((2 * y + 1) * w + 2 * x + 1)]);
                    nb[static_cast<size_t>(y * nw + x)] =
                        0.25 * (b[static_cast<size_t>(2 * y * w + 2 * x)] +
                                b[static_cast<size_t>(2 * y * w + 2 * x + 1)] +
                                b[static_cast<size_t>((2 * y + 1) * w + 2 * x)] +
                                b[static_cast<size_t>((2 * y + 1) * w + 2 * x + 1)]);
                }
            a = std::move(na);
            b = std::move(nb);
            h = nh;
            w = nw;
        }
    }
    return result;
}

} // namespace ref

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("psnr formulas") {
    Rng rng(1);
    Tensor x = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
    SUBCASE("identical inputs cap at 99 dB") { CHECK(psnr(x, x.detach()) == 99.0); }
    SUBCASE("mse 0.01 gives 20 dB") {
        Tensor y = add_scalar(x, 0.1);
        CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-9));
    }
    SUBCASE("dimension mismatch throws") {
        Tensor y = Tensor::zeros({1, 3, 8, 9});
        CHECK_THROWS(psnr(x, y));
    }
}

TEST_CASE("ms-ssim equals one on identical inputs") {
    Rng rng(2);
    Tensor x = random_tensor({1, 3, 64, 64}, rng, 0.0, 1.0);
    CHECK(ms_ssim(x, x.detach()) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ms-ssim matches the independent reference implementation") {
    Rng rng(3);
    for (int trial = 0; trial < 3; ++trial) {
        const int64_t h = 192, w = 192;
        std::vector<double> a(static_cast<size_t>(h * w)), b(a.size());
        // smooth random fields plus noise, so structure terms are exercised
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double base = 0.5 + 0.3 * std::sin(0.07 * x + trial) * std::cos(0.05 * y);
                a[static_cast<size_t>(y * w + x)] = base + rng.uniform(-0.05, 0.05);
                b[static_cast<size_t>(y * w + x)] = base + rng.uniform(-0.05, 0.05);
            }
        double mine = ms_ssim_plane(a, b, h, w);
        double refv = ref::ms_ssim(a, b, h, w);
        CHECK(std::abs(mine - refv) < 1e-6);
    }
}

TEST_CASE("ms-ssim falls back to fewer scales on small images") {
    Rng rng(4);
    Tensor x = random_tensor({1, 1, 32, 32}, rng, 0.0, 1.0);
    Tensor y = random_tensor({1, 1, 32, 32}, rng, 0.0, 1.0);
    double v = ms_ssim(x, y);
    CHECK(std::isfinite(v));
    CHECK(v <= 1.0);
    CHECK(ms_ssim(x, x.detach()) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("y4m round trip") {
    std::string path = tmp_path("gtem_io_test.y4m");
    SUBCASE("gray input survives with only 8-bit quantization error") {
        Rng rng(5);
        Video v;
        Tensor plane = random_tensor({2, 1, 24, 32}, rng, 0.0, 1.0);
        v.frames = concat_channels({plane, plane, plane}); // r = g = b, constant chroma
        write_y4m(path, v);
        Video r = read_y4m(path);
        CHECK(r.frames.shape() == v.frames.shape());
        CHECK(r.fps_num == 25);
        double worst = 0.0;
        for (size_t i = 0; i < r.frames.data().size(); ++i)
            worst = std::max(worst, std::abs(r.frames.data()[i] - v.frames.data()[i]));
        CHECK(worst < 2.0 / 255.0);
    }
    SUBCASE("chroma-smooth content round-trips cleanly through 4:2:0") {
        SyntheticClipSpec spec;
        spec.kind = PatternKind::Gradient;
        spec.vx = 1;
        spec.frames = 3;
        spec.width = 32;
        spec.height = 24;
        spec.seed = 8;
        Video v;
        v.frames = make_clip(spec);
        write_y4m(path, v);
        Video r = read_y4m(path);
        CHECK(r.frames.shape() == v.frames.shape());
        CHECK(psnr(v.frames, r.frames) > 35.0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("y4m rejects unsupported chroma") {
    std::string path = tmp_path("gtem_io_c444.y4m");
    {
        std::ofstream f(path, std::ios::binary);
        f << "YUV4MPEG2 W4 H4 F25:1 Ip A1:1 C444\n";
    }
    CHECK_THROWS_AS(read_y4m(path), VideoIoError);
    std::filesystem::remove(path);
}

TEST_CASE("raw rgb24 with sidecar round trip") {
    Rng rng(6);
    Video v;
    v.frames = random_tensor({2, 3, 10, 12}, rng, 0.0, 1.0);
    std::string path = tmp_path("gtem_io_test.rgb24");
    write_raw_rgb24(path, v);
    Video r = read_raw_rgb24(path);
    CHECK(r.frames.shape() == v.frames.shape());
    double worst = 0.0;
    for (size_t i = 0; i < r.frames.data().size(); ++i)
        worst = std::max(worst, std::abs(r.frames.data()[i] - v.frames.data()[i]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12); // 8-bit quantization only
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}

TEST_CASE("raw reader validates the geometry") {
    std::string path = tmp_path("gtem_io_bad.rgb24");
    {
        std::ofstream f(path, std::ios::binary);
        f << "xyz"; // 3 bytes, not a whole 4x4 frame
    }
    CHECK_THROWS_AS(read_raw_rgb24(path, 4, 4), VideoIoError);
    CHECK_THROWS_AS(read_raw_rgb24(path), VideoIoError); // no sidecar either
    std::filesystem::remove(path);
}

TEST_CASE("replicate padding geometry and invisibility") {
    Rng rng(7);
    Tensor x = random_tensor({2, 3, 30, 45}, rng, 0.0, 1.0);
    Tensor p = pad_replicate(x, 16);
    CHECK(p.shape() == Shape{2, 3, 32, 48});
    // original content is intact, borders replicate
    for (int64_t y = 0; y < 30; ++y)
        for (int64_t xx = 0; xx < 45; ++xx)
            CHECK(p.at({0, 0, y, xx}) == x.at({0, 0, y, xx}));
    CHECK(p.at({0, 0, 31, 47}) == x.at({0, 0, 29, 44}));
    // already-divisible input is returned untouched
    Tensor ok = random_tensor({1, 3, 32, 32}, rng);
    CHECK(oracles::bit_equal(pad_replicate(ok, 16), ok));
}
