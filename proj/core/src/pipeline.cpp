#include "gtem/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace gtem {

using detail::check;

const double kLambdaGrid[3] = {128.0, 256.0, 512.0};

Tensor pad_replicate(const Tensor& frames, int64_t multiple) {
    check(frames.rank() == 4, "pad_replicate: frames must be (T,C,H,W)");
    const int64_t t = frames.dim(0), c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
    const int64_t ph = (multiple - h % multiple) % multiple;
    const int64_t pw = (multiple - w % multiple) % multiple;
    if (ph == 0 && pw == 0) return frames;
    const int64_t oh = h + ph, ow = w + pw;
    Tensor out = Tensor::zeros({t, c, oh, ow});
    auto od = out.raw();
    auto id = frames.data();
    for (int64_t tc = 0; tc < t * c; ++tc)
        for (int64_t y = 0; y < oh; ++y) {
            int64_t sy = std::min(y, h - 1);
            for (int64_t x = 0; x < ow; ++x) {
                int64_t sx = std::min(x, w - 1);
                od[static_cast<size_t>((tc * oh + y) * ow + x)] =
                    id[static_cast<size_t>((tc * h + sy) * w + sx)];
            }
        }
    return out;
}

VideoCodec::VideoCodec(const CodecConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    ga_.init(store_, cfg_, rng);
    gs_.init(store_, cfg_, rng);
    entropy_.init(store_, cfg_, rng);
}

TrainForwardOut VideoCodec::train_forward(const Tensor& x_gop, Rng& noise_rng) const {
    Tensor y = ga_.forward(x_gop);
    EntropyTrainOut em = entropy_.forward_train(y, noise_rng);
    TrainForwardOut out;
    out.x_hat = gs_.forward(em.y_refined);
    out.y_bits = em.y_bits;
    out.z_bits = em.z_bits;
    out.y_refined = em.y_refined;
    return out;
}

VideoCodec::GopEncode VideoCodec::encode_gop(const Tensor& x_gop, bool zero_conditions,
                                             bool reconstruct) const {
    NoGradGuard ng;
    Tensor y = ga_.forward(x_gop);
    EntropyEncodeOut em = entropy_.encode_gop(y, zero_conditions);
    GopEncode out;
    out.segments = std::move(em.segments);
    out.y_refined = em.y_refined;
    out.estimated_bits = em.estimated_bits;
    out.estimated_z_bits = em.estimated_z_bits;
    out.per_frame_bits = em.per_frame_bits;
    if (reconstruct) out.x_hat = gs_.forward(em.y_refined);
    return out;
}

EncodeVideoResult VideoCodec::encode_video(const Tensor& frames, int64_t gop_size,
                                           uint8_t lambda_index, uint8_t preset_id,
                                           bool zero_conditions, int threads) const {
    check(frames.rank() == 4 && frames.dim(1) == 3, "encode_video: frames must be (T,3,H,W)");
    check(gop_size >= 1 && gop_size <= 255, "encode_video: gop size must be in [1,255]");
    check(lambda_index < 3, "encode_video: lambda index must be 0, 1 or 2");
    const int64_t total = frames.dim(0);
    check(total >= 1 && total <= 65535, "encode_video: frame count out of range");
    const int64_t h = frames.dim(2), w = frames.dim(3);
    check(h <= 65535 && w <= 65535, "encode_video: resolution out of range");

    auto t0 = std::chrono::steady_clock::now();
    Tensor padded = pad_replicate(frames, CodecConfig::kTotalDownsample);

    const int64_t gop_count = (total + gop_size - 1) / gop_size;
    std::vector<GopSegments> segments(static_cast<size_t>(gop_count));
    std::vector<GopStats> stats(static_cast<size_t>(gop_count));
    std::vector<std::vector<double>> frame_bits(static_cast<size_t>(gop_count));

    auto encode_one = [&](int64_t g) {
        int64_t start = g * gop_size;
        int64_t len = std::min(gop_size, total - start);
        Tensor x_gop = narrow(padded, 0, start, len).detach();
        GopEncode ge = encode_gop(x_gop, zero_conditions, false);
        double z_share =
            (ge.segments.z.size() * 8.0) / static_cast<double>(len); // amortized for the report
        std::vector<double> fb;
        for (int64_t f = 0; f < len; ++f) {
            double slice_bits = 0.0;
            for (const auto& s : ge.segments.frame_slices[static_cast<size_t>(f)])
                slice_bits += static_cast<double>(s.size()) * 8.0;
            fb.push_back(slice_bits + z_share);
        }
        stats[static_cast<size_t>(g)] = {ge.estimated_bits, ge.segments.payload_bytes()};
        frame_bits[static_cast<size_t>(g)] = std::move(fb);
        segments[static_cast<size_t>(g)] = std::move(ge.segments);
    };

    if (threads <= 1 || gop_count == 1) {
        for (int64_t g = 0; g < gop_count; ++g) encode_one(g);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int64_t> next{0};
        int nthreads = std::min<int64_t>(threads, gop_count);
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back([&] {
                for (;;) {
                    int64_t g = next.fetch_add(1);
                    if (g >= gop_count) return;
                    encode_one(g);
                }
            });
        for (auto& th : pool) th.join();
    }

    ContainerHeader header;
    header.width = static_cast<uint16_t>(w);
    header.height = static_cast<uint16_t>(h);
    header.frame_count = static_cast<uint16_t>(total);
    header.gop_size = static_cast<uint8_t>(gop_size);
    header.lambda_index = lambda_index;
    header.model_hash = store_.content_hash();
    header.set_preset_id(preset_id);
    header.set_conditions_zeroed(zero_conditions);

    EncodeVideoResult out;
    out.container = pack_container(header, segments);
    out.gops = std::move(stats);
    for (auto& fb : frame_bits)
        out.per_frame_bits.insert(out.per_frame_bits.end(), fb.begin(), fb.end());
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

DecodeVideoResult VideoCodec::decode_video(const std::vector<uint8_t>& container,
                                           int threads) const {
    auto t0 = std::chrono::steady_clock::now();
    ParsedContainer pc = parse_container(container);
    const ContainerHeader& h = pc.header;
    if (h.model_hash != store_.content_hash())
        throw ContainerError("decode: model hash mismatch; wrong checkpoint for this bitstream");

    const int64_t ph = (h.height + 15) / 16 * 16;
    const int64_t pw = (h.width + 15) / 16 * 16;
    const int64_t lh = ph / CodecConfig::kTotalDownsample;
    const int64_t lw = pw / CodecConfig::kTotalDownsample;

    const int64_t gop_count = static_cast<int64_t>(pc.gops.size());
    std::vector<Tensor> recon(static_cast<size_t>(gop_count));
    auto decode_one = [&](int64_t g) {
        int64_t frames_in = static_cast<int64_t>(pc.gops[static_cast<size_t>(g)].frame_slices.size());
        Tensor y_ref = entropy_.decode_gop(pc.gops[static_cast<size_t>(g)], frames_in, lh, lw,
                                           h.conditions_zeroed());
        NoGradGuard ng;
        recon[static_cast<size_t>(g)] = gs_.forward(y_ref);
    };

    if (threads <= 1 || gop_count == 1) {
        for (int64_t g = 0; g < gop_count; ++g) decode_one(g);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int64_t> next{0};
        int nthreads = std::min<int64_t>(threads, gop_count);
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back([&] {
                for (;;) {
                    int64_t g = next.fetch_add(1);
                    if (g >= gop_count) return;
                    decode_one(g);
                }
            });
        for (auto& th : pool) th.join();
    }

    Tensor all = recon.size() == 1 ? recon[0] : concat(recon, 0);
    DecodeVideoResult out;
    out.frames = narrow(narrow(all, 2, 0, h.height), 3, 0, h.width).detach();
    out.header = h;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace gtem
