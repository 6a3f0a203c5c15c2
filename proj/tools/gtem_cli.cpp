// gtem: transform-based learned video codec over raw RGB24 / y4m input.
// Subcommands: encode, decode, train, metrics, selftest.
// Exit codes: 0 ok, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include "gtem/metrics.hpp"
#include "gtem/pipeline.hpp"
#include "gtem/selftest.hpp"
#include "gtem/trainer.hpp"
#include "gtem/video_io.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct SizeOpt {
    int64_t w = 0, h = 0;
};

bool parse_size(const std::string& s, SizeOpt& out) {
    auto x = s.find('x');
    if (x == std::string::npos) return false;
    try {
        out.w = std::stoll(s.substr(0, x));
        out.h = std::stoll(s.substr(x + 1));
    } catch (...) {
        return false;
    }
    return out.w > 0 && out.h > 0;
}

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw gtem::VideoIoError("cannot open " + path);
    auto size = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> bytes(size);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw gtem::VideoIoError("read failed for " + path);
    return bytes;
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw gtem::VideoIoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw gtem::VideoIoError("write failed for " + path);
}

uint8_t preset_to_id(const std::string& preset) { return preset == "full" ? 1 : 0; }
std::string id_to_preset(uint8_t id) { return id == 1 ? "full" : "tiny"; }

bool tensors_equal(const gtem::Tensor& a, const gtem::Tensor& b) {
    if (a.shape() != b.shape()) return false;
    auto ad = a.data();
    auto bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i)
        if (ad[i] != bd[i]) return false;
    return true;
}

int cmd_encode(const std::string& input, const std::string& checkpoint, const std::string& output,
               int64_t gop, int lambda_index, const std::string& preset, const SizeOpt& size,
               bool verify, int threads, bool zero_conditions) {
    gtem::Video video = gtem::read_video(input, size.w, size.h);
    const int64_t frames = video.frames.dim(0);
    const int64_t h = video.frames.dim(2), w = video.frames.dim(3);

    gtem::VideoCodec codec(gtem::CodecConfig::preset(preset), 1);
    codec.params().load(checkpoint);

    auto res = codec.encode_video(video.frames, gop, static_cast<uint8_t>(lambda_index),
                                  preset_to_id(preset), zero_conditions, threads);
    write_bytes(output, res.container);

    double bpp = res.bpp(w, h, frames);
    std::printf("input: %s (%lld frames, %lldx%lld)\n", input.c_str(),
                static_cast<long long>(frames), static_cast<long long>(w),
                static_cast<long long>(h));
    std::printf("model: %s preset, lambda %g, %lld parameters\n", preset.c_str(),
                gtem::kLambdaGrid[lambda_index],
                static_cast<long long>(codec.params().value_count()));
    std::printf("gops: %zu  bytes: %zu  mean bpp: %.6f\n", res.gops.size(), res.container.size(),
                bpp);
    for (size_t f = 0; f < res.per_frame_bits.size(); ++f)
        std::printf("frame %03zu bpp: %.6f\n", f,
                    res.per_frame_bits[f] / (static_cast<double>(w) * static_cast<double>(h)));
    std::printf("encode time: %.3f s\n", res.seconds);

    if (verify) {
        auto dec = codec.decode_video(res.container, threads);
        auto re = codec.encode_video(video.frames, gop, static_cast<uint8_t>(lambda_index),
                                     preset_to_id(preset), zero_conditions, threads);
        if (re.container != res.container) {
            std::fprintf(stderr, "verify: re-encode is not byte-identical\n");
            return kExitData;
        }
        auto m = gtem::video_metrics(video.frames, dec.frames);
        std::printf("verify: ok (re-encode byte-identical, decode reproduces)\n");
        for (size_t f = 0; f < m.frame_psnr.size(); ++f)
            std::printf("frame %03zu psnr: %.4f dB  ms-ssim: %.6f\n", f, m.frame_psnr[f],
                        m.frame_ms_ssim[f]);
        std::printf("mean psnr: %.4f dB  mean ms-ssim: %.6f  decode time: %.3f s\n", m.mean_psnr,
                    m.mean_ms_ssim, dec.seconds);
    }
    return kExitOk;
}

int cmd_decode(const std::string& input, const std::string& checkpoint, const std::string& output,
               int threads, bool verify) {
    auto container = read_bytes(input);
    auto parsed = gtem::parse_container(container); // early validation incl. checksum
    std::string preset = id_to_preset(parsed.header.preset_id());

    gtem::VideoCodec codec(gtem::CodecConfig::preset(preset), 1);
    codec.params().load(checkpoint);
    auto res = codec.decode_video(container, threads);

    if (verify) {
        auto again = codec.decode_video(container, threads);
        if (!tensors_equal(res.frames, again.frames)) {
            std::fprintf(stderr, "verify: decode is not stable across runs\n");
            return kExitData;
        }
        std::printf("verify: ok (repeat decode bit-identical)\n");
    }

    gtem::Video out;
    out.frames = res.frames;
    gtem::write_video(output, out);
    std::printf("decoded %u frames (%ux%u) in %.3f s -> %s\n", parsed.header.frame_count,
                parsed.header.width, parsed.header.height, res.seconds, output.c_str());
    return kExitOk;
}

int cmd_metrics(const std::string& reference, const std::string& reconstruction,
                const SizeOpt& size) {
    gtem::Video ref = gtem::read_video(reference, size.w, size.h);
    gtem::Video rec = gtem::read_video(reconstruction, size.w, size.h);
    if (ref.frames.shape() != rec.frames.shape())
        throw gtem::VideoIoError("metrics: dimension mismatch between inputs");
    auto m = gtem::video_metrics(ref.frames, rec.frames);
    for (size_t f = 0; f < m.frame_psnr.size(); ++f)
        std::printf("frame %03zu psnr: %.4f dB  ms-ssim: %.6f\n", f, m.frame_psnr[f],
                    m.frame_ms_ssim[f]);
    std::printf("mean psnr: %.4f dB\nmean ms-ssim: %.6f\n", m.mean_psnr, m.mean_ms_ssim);
    return kExitOk;
}

int cmd_train(int stage, const std::string& preset, int lambda_index, int64_t steps,
              uint64_t seed, const std::string& init_ckpt, const std::string& out_ckpt,
              const std::string& log_path, double lambda_per, double lambda_sty) {
    gtem::VideoCodec codec(gtem::CodecConfig::preset(preset), seed);
    if (!init_ckpt.empty()) codec.params().load(init_ckpt);
    else if (stage == 2)
        throw std::invalid_argument("train: stage 2 starts from a stage-1 checkpoint (--init)");

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) throw gtem::VideoIoError("cannot open log " + log_path);
    }

    auto dataset = gtem::make_synthetic_dataset(48, 5, 32, seed + 1000);
    gtem::TrainOptions opts;
    opts.steps = steps;
    opts.seed = seed;
    opts.stage = stage;
    opts.weights.lambda = gtem::kLambdaGrid[lambda_index];
    opts.weights.lambda_per = lambda_per;
    opts.weights.lambda_sty = lambda_sty;
    opts.on_step = [&](const gtem::TrainLogEntry& e) {
        std::string line = gtem::format_log_entry(e);
        if (log) log << line << "\n";
        if (e.step % 50 == 0 || e.step == steps - 1) {
            std::printf("%s\n", line.c_str());
            std::fflush(stdout);
        }
    };

    std::printf("training stage %d, preset %s, lambda %g, %lld steps, %lld parameters\n", stage,
                preset.c_str(), opts.weights.lambda, static_cast<long long>(steps),
                static_cast<long long>(codec.params().value_count()));
    gtem::train_stage(codec, dataset, opts);
    codec.params().save(out_ckpt);
    std::printf("checkpoint written to %s (hash %016llx)\n", out_ckpt.c_str(),
                static_cast<unsigned long long>(codec.params().content_hash()));
    return kExitOk;
}

int cmd_selftest(uint64_t seed) {
    gtem::SelftestOptions opts;
    opts.seed = seed;
    auto report = gtem::run_selftest(opts);
    std::printf("%zu checks, %s, %.1f s\n", report.checks.size(),
                report.all_passed() ? "all passed" : "FAILURES", report.seconds);
    return report.all_passed() ? kExitOk : kExitData;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gtem - transform-based learned video codec"};
    app.require_subcommand(1);

    std::string input, output, checkpoint, reference, reconstruction, preset = "tiny";
    std::string init_ckpt, log_path, size_str;
    int64_t gop = 8, steps = 5000;
    int lambda_index = 1, stage = 1, threads = 1;
    uint64_t seed = 1;
    bool verify = false, zero_conditions = false;
    double lambda_per = 1.0, lambda_sty = 0.15;

    auto* enc = app.add_subcommand("encode", "encode a video into a gtem bitstream");
    enc->add_option("--input,-i", input)->required();
    enc->add_option("--checkpoint,-c", checkpoint)->required();
    enc->add_option("--output,-o", output)->required();
    enc->add_option("--gop", gop)->default_val(8);
    enc->add_option("--lambda-index", lambda_index)->check(CLI::Range(0, 2))->default_val(1);
    enc->add_option("--preset", preset)->check(CLI::IsMember({"tiny", "full"}));
    enc->add_option("--size", size_str, "WxH for raw rgb24 without a sidecar");
    enc->add_option("--threads", threads)->default_val(1);
    enc->add_flag("--verify", verify, "decode in-process and check reproduction");
    enc->add_flag("--no-conditions", zero_conditions, "zero the temporal conditions (ablation)");

    auto* dec = app.add_subcommand("decode", "decode a gtem bitstream");
    dec->add_option("--input,-i", input)->required();
    dec->add_option("--checkpoint,-c", checkpoint)->required();
    dec->add_option("--output,-o", output)->required();
    dec->add_option("--threads", threads)->default_val(1);
    dec->add_flag("--verify", verify);

    auto* met = app.add_subcommand("metrics", "psnr / ms-ssim between two videos");
    met->add_option("--reference,-r", reference)->required();
    met->add_option("--reconstruction,-t", reconstruction)->required();
    met->add_option("--size", size_str);

    auto* tr = app.add_subcommand("train", "train on the synthetic dataset");
    tr->add_option("--stage", stage)->check(CLI::Range(1, 2))->default_val(1);
    tr->add_option("--preset", preset)->check(CLI::IsMember({"tiny", "full"}));
    tr->add_option("--lambda-index", lambda_index)->check(CLI::Range(0, 2))->default_val(1);
    tr->add_option("--steps", steps)->default_val(5000);
    tr->add_option("--seed", seed)->default_val(1);
    tr->add_option("--init", init_ckpt, "starting checkpoint (required for stage 2)");
    tr->add_option("--out,-o", output)->required();
    tr->add_option("--log", log_path);
    tr->add_option("--lambda-per", lambda_per)->default_val(1.0);
    tr->add_option("--lambda-sty", lambda_sty)->default_val(0.15);

    auto* st = app.add_subcommand("selftest", "run the invariant suite");
    st->add_option("--seed", seed)->default_val(17);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e); // prints message or help text
        return code == 0 ? kExitOk : kExitUsage;
    }

    SizeOpt size;
    if (!size_str.empty() && !parse_size(size_str, size)) {
        std::fprintf(stderr, "bad --size, expected WxH\n");
        return kExitUsage;
    }

    try {
        if (enc->parsed())
            return cmd_encode(input, checkpoint, output, gop, lambda_index, preset, size, verify,
                              threads, zero_conditions);
        if (dec->parsed()) return cmd_decode(input, checkpoint, output, threads, verify);
        if (met->parsed()) return cmd_metrics(reference, reconstruction, size);
        if (tr->parsed())
            return cmd_train(stage, preset, lambda_index, steps, seed, init_ckpt, output, log_path,
                             lambda_per, lambda_sty);
        if (st->parsed()) return cmd_selftest(seed);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
