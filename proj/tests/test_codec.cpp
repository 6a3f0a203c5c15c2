#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gtem/pipeline.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace gtem;
using oracles::bit_equal;
using oracles::random_tensor;

namespace {

// small enough for gradient probes, still 4 stages deep
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

} // namespace

TEST_CASE("config validation") {
    CodecConfig c = CodecConfig::tiny();
    CHECK(c.latent_channels % 5 == 0);
    CHECK(c.slice_width() == 8);
    c.latent_channels = 41;
    CHECK_THROWS(c.validate());
    CHECK(CodecConfig::full().latent_channels == 320);
    CHECK_THROWS(CodecConfig::preset("huge"));
}

TEST_CASE("analysis transform output geometry") {
    ParamStore store;
    Rng rng(1);
    AnalysisTransform ga;
    CodecConfig cfg = micro_config();
    ga.init(store, cfg, rng);
    NoGradGuard ng;

    Tensor x = random_tensor({2, 3, 32, 48}, rng, 0.0, 1.0);
    Tensor y = ga.forward(x);
    CHECK(y.shape() == Shape{2, cfg.latent_channels, 2, 3});

    SUBCASE("identical inputs give identical latents") {
        Tensor y2 = ga.forward(x.detach());
        CHECK(bit_equal(y, y2));
    }
    SUBCASE("indivisible resolution is rejected") {
        Tensor bad = random_tensor({1, 3, 20, 32}, rng);
        CHECK_THROWS(ga.forward(bad));
    }
}

TEST_CASE("synthesis transform mirrors the encoder geometry") {
    ParamStore store;
    Rng rng(2);
    CodecConfig cfg = micro_config();
    AnalysisTransform ga;
    SynthesisTransform gs;
    ga.init(store, cfg, rng);
    gs.init(store, cfg, rng);
    NoGradGuard ng;

    for (int trial = 0; trial < 3; ++trial) {
        int64_t t = 1 + trial;
        int64_t h = 16 * (1 + trial % 2);
        int64_t w = 16 * (1 + trial);
        Tensor x = random_tensor({t, 3, h, w}, rng, 0.0, 1.0);
        Tensor y = ga.forward(x);
        Tensor xr = gs.forward(y);
        CHECK(xr.shape() == x.shape());
        for (double v : xr.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(bit_equal(gs.forward(y.detach()), xr));
    }
}

TEST_CASE("evss residual wiring: zeroed sub-blocks act as the identity") {
    ParamStore store;
    Rng rng(3);
    CodecConfig cfg = micro_config();
    EvssWeights w;
    w.init(store, "evss", 4, cfg, rng);
    // zero every weight except the norm gains; offsets already zero
    for (Parameter* p : store.sorted())
        if (p->name.find("ln1_g") == std::string::npos &&
            p->name.find("ln2_g") == std::string::npos &&
            p->name.find(".ln_g") == std::string::npos)
            for (auto& v : p->value.raw()) v = 0.0;
    Tensor x = random_tensor({2, 4, 4, 4}, rng);
    CHECK(bit_equal(evss(x, w), x));
}

TEST_CASE("encoder gradient reaches the input through the full stack") {
    ParamStore store;
    Rng rng(4);
    CodecConfig cfg = micro_config();
    AnalysisTransform ga;
    ga.init(store, cfg, rng);
    Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.1, 0.9).set_requires_grad(true);
    auto fwd = [&] { return ga.forward(x); };
    auto rep = oracles::fd_gradcheck(fwd, x, 12, rng);
    CHECK(rep.worst_rel < 1e-4);
}

TEST_CASE("untrained round trip produces finite metrics") {
    VideoCodec codec(micro_config(), 5);
    Rng rng(6);
    Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
    auto enc = codec.encode_gop(x, false, true);
    REQUIRE(enc.x_hat.defined());
    double mse = 0.0;
    for (size_t i = 0; i < enc.x_hat.data().size(); ++i) {
        double d = enc.x_hat.data()[i] - x.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    double psnr = 10.0 * std::log10(1.0 / std::max(mse, 1e-12));
    CHECK(std::isfinite(psnr));
    MESSAGE("untrained round-trip psnr: ", psnr, " dB, estimated bits: ", enc.estimated_bits);
}

TEST_CASE("parameter checkpoints restore codec behaviour exactly") {
    CodecConfig cfg = micro_config();
    VideoCodec a(cfg, 7);
    Rng rng(8);
    Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
    auto bytes = a.params().serialize();

    VideoCodec b(cfg, 999); // different init
    b.params().deserialize(bytes);
    CHECK(a.params().content_hash() == b.params().content_hash());
    NoGradGuard ng;
    CHECK(bit_equal(a.encode_latents(x), b.encode_latents(x)));
}
