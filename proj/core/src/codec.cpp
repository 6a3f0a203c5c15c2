#include "gtem/codec.hpp"

#include <stdexcept>

namespace gtem {

using detail::check;

void CodecConfig::validate() const {
    check(stage_channels.size() == 3, "config: expected 3 pre-latent stage widths");
    check(latent_channels % kSliceCount == 0, "config: latent channels must divide by 5");
    for (int64_t c : stage_channels) check(c >= 2 && c % 2 == 0, "config: stage widths must be even");
    check(latent_channels % 2 == 0, "config: latent width must be even");
    check(evss_per_stage >= 1, "config: need at least one EVSS block per stage");
    check(state_dim >= 1, "config: state dim must be positive");
    check(motion_grid >= 1, "config: motion grid must be positive");
}

CodecConfig CodecConfig::tiny() { return CodecConfig{}; }

CodecConfig CodecConfig::full() {
    CodecConfig c;
    c.stage_channels = {128, 192, 256};
    c.latent_channels = 320;
    c.hyper_channels = 160;
    c.hyper_feat_channels = 160;
    c.slice_hidden = 64;
    c.cgn_channels = 128;
    c.motion_channels = 128;
    return c;
}

CodecConfig CodecConfig::preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "full") return full();
    throw std::invalid_argument("unknown preset: " + name);
}

void EvssWeights::init(ParamStore& store, const std::string& prefix, int64_t channels,
                       const CodecConfig& cfg, Rng& rng) {
    ln1_g = store.add(prefix + ".ln1_g", init_ones({channels})).value;
    ln1_b = store.add(prefix + ".ln1_b", init_zeros({channels})).value;
    ln2_g = store.add(prefix + ".ln2_g", init_ones({channels})).value;
    ln2_b = store.add(prefix + ".ln2_b", init_zeros({channels})).value;
    cmm.init(store, prefix + ".cmm", channels, cfg.state_dim, rng);
    ffn.init(store, prefix + ".ffn", channels, channels * cfg.ffn_expand, rng);
}

Tensor evss(const Tensor& x, const EvssWeights& w) {
    Tensor u = add(x, cmm(layernorm_channels(x, w.ln1_g, w.ln1_b, 1e-6), w.cmm));
    return add(u, lrffn(layernorm_channels(u, w.ln2_g, w.ln2_b, 1e-6), w.ffn));
}

namespace {

Tensor conv_down(const Tensor& x, const Tensor& k, const Tensor& b) {
    return conv2d(x, k, {.stride = 2, .pad = 1, .depthwise = false}, b);
}

Tensor conv_same(const Tensor& x, const Tensor& k, const Tensor& b) {
    return conv2d(x, k, {.stride = 1, .pad = 1, .depthwise = false}, b);
}

} // namespace

void AnalysisTransform::init(ParamStore& store, const CodecConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<int64_t> widths = {3};
    for (int64_t c : cfg.stage_channels) widths.push_back(c);
    widths.push_back(cfg.latent_channels);

    stages_.clear();
    for (size_t s = 0; s + 1 < widths.size(); ++s) {
        Stage st;
        std::string prefix = "ga.stage" + std::to_string(s);
        st.down_k = store.add(prefix + ".down_k",
                              init_uniform_fan({widths[s + 1], widths[s], 3, 3}, widths[s] * 9, rng))
                        .value;
        st.down_b = store.add(prefix + ".down_b", init_zeros({widths[s + 1]})).value;
        for (int64_t bidx = 0; bidx < cfg.evss_per_stage; ++bidx) {
            EvssWeights ew;
            ew.init(store, prefix + ".evss" + std::to_string(bidx), widths[s + 1], cfg, rng);
            st.blocks.push_back(std::move(ew));
        }
        stages_.push_back(std::move(st));
    }
}

Tensor AnalysisTransform::forward(const Tensor& x) const {
    check(x.rank() == 4 && x.dim(1) == 3, "encode: input must be (T,3,H,W)");
    check(x.dim(2) % CodecConfig::kTotalDownsample == 0 &&
              x.dim(3) % CodecConfig::kTotalDownsample == 0,
          "encode: resolution must divide by 16; pad the input first");
    Tensor f = x;
    for (const Stage& st : stages_) {
        f = conv_down(f, st.down_k, st.down_b);
        for (const EvssWeights& b : st.blocks) f = evss(f, b);
    }
    return f;
}

void SynthesisTransform::init(ParamStore& store, const CodecConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<int64_t> widths = {cfg.latent_channels};
    for (auto it = cfg.stage_channels.rbegin(); it != cfg.stage_channels.rend(); ++it)
        widths.push_back(*it);
    widths.push_back(3);

    stages_.clear();
    for (size_t s = 0; s + 1 < widths.size(); ++s) {
        Stage st;
        std::string prefix = "gs.stage" + std::to_string(s);
        for (int64_t bidx = 0; bidx < cfg.evss_per_stage; ++bidx) {
            EvssWeights ew;
            ew.init(store, prefix + ".evss" + std::to_string(bidx), widths[s], cfg, rng);
            st.blocks.push_back(std::move(ew));
        }
        st.up_k = store.add(prefix + ".up_k",
                            init_uniform_fan({widths[s + 1], widths[s], 3, 3}, widths[s] * 9, rng))
                      .value;
        st.up_b = store.add(prefix + ".up_b", init_zeros({widths[s + 1]})).value;
        stages_.push_back(std::move(st));
    }
}

Tensor SynthesisTransform::forward(const Tensor& y) const {
    check(y.rank() == 4, "decode: latent must be (T,M,h,w)");
    Tensor f = y;
    for (const Stage& st : stages_) {
        for (const EvssWeights& b : st.blocks) f = evss(f, b);
        f = conv_same(nearest_upsample2(f), st.up_k, st.up_b);
    }
    return clamp01(f);
}

} // namespace gtem
