#pragma once

#include "gtem/locality.hpp"
#include "gtem/scan.hpp"

#include <string>
#include <vector>

namespace gtem {

// Four stride-2 stages in each direction; total downsampling is 16.
struct CodecConfig {
    std::vector<int64_t> stage_channels = {32, 48, 64}; // scales /2, /4, /8
    int64_t latent_channels = 40;                       // scale /16, divisible by 5
    int64_t evss_per_stage = 1;
    int64_t state_dim = 16;
    int64_t ffn_expand = 2;

    // entropy model widths
    int64_t hyper_channels = 20;      // z
    int64_t hyper_feat_channels = 20; // each of f_mu, f_sigma
    int64_t slice_hidden = 16;
    int64_t cgn_channels = 32;
    int64_t cgn_blocks = 2;
    int64_t motion_channels = 32;
    int64_t motion_grid = 4;          // stored size of the flow rectification maps

    static constexpr int64_t kSliceCount = 5;
    static constexpr int64_t kTotalDownsample = 16;

    int64_t slice_width() const { return latent_channels / kSliceCount; }
    void validate() const;

    static CodecConfig tiny();
    static CodecConfig full();
    static CodecConfig preset(const std::string& name);
};

struct EvssWeights {
    Tensor ln1_g, ln1_b;
    Tensor ln2_g, ln2_b;
    CmmWeights cmm;
    LrffnWeights ffn;

    void init(ParamStore& store, const std::string& prefix, int64_t channels,
              const CodecConfig& cfg, Rng& rng);
};

// x + CMM(LN(x)), then + LRFFN(LN(.))
Tensor evss(const Tensor& x, const EvssWeights& w);

class AnalysisTransform {
public:
    void init(ParamStore& store, const CodecConfig& cfg, Rng& rng);
    // (T,3,H,W) -> (T,M,H/16,W/16); H and W must divide by 16
    Tensor forward(const Tensor& x) const;

private:
    struct Stage {
        Tensor down_k, down_b;
        std::vector<EvssWeights> blocks;
    };
    std::vector<Stage> stages_;
};

class SynthesisTransform {
public:
    void init(ParamStore& store, const CodecConfig& cfg, Rng& rng);
    // (T,M,h,w) -> (T,3,16h,16w), clamped to [0,1]
    Tensor forward(const Tensor& y) const;

private:
    struct Stage {
        std::vector<EvssWeights> blocks;
        Tensor up_k, up_b;
    };
    std::vector<Stage> stages_;
};

} // namespace gtem
