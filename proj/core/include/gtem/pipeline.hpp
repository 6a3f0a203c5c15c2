#pragma once

#include "gtem/codec.hpp"
#include "gtem/container.hpp"
#include "gtem/entropy.hpp"

#include <string>
#include <vector>

namespace gtem {

struct TrainForwardOut {
    Tensor x_hat;  // (T,3,H,W)
    Tensor y_bits; // scalar tensors, -sum log2 P
    Tensor z_bits;
    Tensor y_refined;
};

struct GopStats {
    double estimated_bits = 0.0;
    size_t payload_bytes = 0; // coded segment bytes, framing excluded
};

struct EncodeVideoResult {
    std::vector<uint8_t> container;
    std::vector<GopStats> gops;
    std::vector<double> per_frame_bits; // actual, z amortized within the gop
    double seconds = 0.0;

    double bpp(int64_t width, int64_t height, int64_t frames) const {
        double payload = static_cast<double>(container.size() - ContainerHeader::kSize) * 8.0;
        return payload / (static_cast<double>(width) * static_cast<double>(height) *
                          static_cast<double>(frames));
    }
};

struct DecodeVideoResult {
    Tensor frames; // (T,3,H,W) at the original resolution
    ContainerHeader header;
    double seconds = 0.0;
};

// replicate-border padding up to multiples of `multiple`
Tensor pad_replicate(const Tensor& frames, int64_t multiple);

extern const double kLambdaGrid[3]; // {128, 256, 512}

class VideoCodec {
public:
    VideoCodec(const CodecConfig& cfg, uint64_t init_seed);

    const CodecConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const EntropyModel& entropy() const { return entropy_; }

    Tensor encode_latents(const Tensor& x_gop) const { return ga_.forward(x_gop); }
    Tensor decode_frames(const Tensor& y_refined) const { return gs_.forward(y_refined); }

    TrainForwardOut train_forward(const Tensor& x_gop, Rng& noise_rng) const;

    struct GopEncode {
        GopSegments segments;
        Tensor y_refined;
        Tensor x_hat;
        double estimated_bits = 0.0;
        std::vector<double> per_frame_bits;
        double estimated_z_bits = 0.0;
    };
    GopEncode encode_gop(const Tensor& x_gop, bool zero_conditions = false,
                         bool reconstruct = false) const;

    EncodeVideoResult encode_video(const Tensor& frames, int64_t gop_size, uint8_t lambda_index,
                                   uint8_t preset_id, bool zero_conditions = false,
                                   int threads = 1) const;
    DecodeVideoResult decode_video(const std::vector<uint8_t>& container, int threads = 1) const;

private:
    CodecConfig cfg_;
    ParamStore store_;
    AnalysisTransform ga_;
    SynthesisTransform gs_;
    EntropyModel entropy_;
};

} // namespace gtem
