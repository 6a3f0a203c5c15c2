#include "gtem/video_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace gtem {

namespace {

uint8_t to_byte(double v) {
    double s = std::round(v * 255.0);
    return static_cast<uint8_t>(std::min(255.0, std::max(0.0, s)));
}

// BT.601 full range
void rgb_to_ycbcr(double r, double g, double b, double& y, double& cb, double& cr) {
    y = 0.299 * r + 0.587 * g + 0.114 * b;
    cb = 0.5 + (b - y) * (0.5 / 0.886);
    cr = 0.5 + (r - y) * (0.5 / 0.701);
}

void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g, double& b) {
    r = y + 1.402 * (cr - 0.5);
    g = y - 0.344136286201022 * (cb - 0.5) - 0.714136286201022 * (cr - 0.5);
    b = y + 1.772 * (cb - 0.5);
    r = std::min(1.0, std::max(0.0, r));
    g = std::min(1.0, std::max(0.0, g));
    b = std::min(1.0, std::max(0.0, b));
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw VideoIoError("cannot open " + path);
    auto size = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> bytes(size);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw VideoIoError("read failed for " + path);
    return bytes;
}

} // namespace

Video read_y4m(const std::string& path) {
    auto bytes = read_file(path);
    size_t pos = 0;
    auto read_line = [&]() -> std::string {
        size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) throw VideoIoError(path + ": truncated y4m header");
        std::string line(reinterpret_cast<const char*>(bytes.data() + start), pos - start);
        ++pos;
        return line;
    };

    std::string header = read_line();
    if (header.rfind("YUV4MPEG2", 0) != 0) throw VideoIoError(path + ": not a y4m file");
    int64_t w = 0, h = 0, fn = 25, fd = 1;
    std::string chroma = "420";
    std::istringstream iss(header);
    std::string tok;
    iss >> tok; // signature
    while (iss >> tok) {
        if (tok.empty()) continue;
        char tag = tok[0];
        std::string v = tok.substr(1);
        if (tag == 'W') w = std::stoll(v);
        else if (tag == 'H') h = std::stoll(v);
        else if (tag == 'F') {
            auto colon = v.find(':');
            if (colon != std::string::npos) {
                fn = std::stoll(v.substr(0, colon));
                fd = std::stoll(v.substr(colon + 1));
            }
        } else if (tag == 'C') chroma = v;
    }
    if (w <= 0 || h <= 0) throw VideoIoError(path + ": missing y4m dimensions");
    if (chroma.rfind("420", 0) != 0)
        throw VideoIoError(path + ": unsupported chroma C" + chroma + " (C420 only)");
    if (w % 2 || h % 2) throw VideoIoError(path + ": C420 needs even dimensions");

    const int64_t cw = w / 2, ch = h / 2;
    const size_t frame_bytes = static_cast<size_t>(w * h + 2 * cw * ch);
    std::vector<std::vector<double>> frames;
    while (pos < bytes.size()) {
        std::string marker = read_line();
        if (marker.rfind("FRAME", 0) != 0) throw VideoIoError(path + ": bad frame marker");
        if (pos + frame_bytes > bytes.size()) throw VideoIoError(path + ": truncated frame");
        const uint8_t* yp = bytes.data() + pos;
        const uint8_t* up = yp + w * h;
        const uint8_t* vp = up + cw * ch;
        std::vector<double> rgb(static_cast<size_t>(3 * w * h));
        for (int64_t yy = 0; yy < h; ++yy)
            for (int64_t xx = 0; xx < w; ++xx) {
                double ly = yp[yy * w + xx] / 255.0;
                double cb = up[(yy / 2) * cw + xx / 2] / 255.0;
                double cr = vp[(yy / 2) * cw + xx / 2] / 255.0;
                double r, g, b;
                ycbcr_to_rgb(ly, cb, cr, r, g, b);
                rgb[static_cast<size_t>(0 * h * w + yy * w + xx)] = r;
                rgb[static_cast<size_t>(1 * h * w + yy * w + xx)] = g;
                rgb[static_cast<size_t>(2 * h * w + yy * w + xx)] = b;
            }
        frames.push_back(std::move(rgb));
        pos += frame_bytes;
    }
    if (frames.empty()) throw VideoIoError(path + ": no frames");

    Video v;
    v.fps_num = fn;
    v.fps_den = fd;
    std::vector<double> all;
    all.reserve(frames.size() * frames[0].size());
    for (auto& f : frames) all.insert(all.end(), f.begin(), f.end());
    v.frames = Tensor::from({static_cast<int64_t>(frames.size()), 3, h, w}, std::move(all));
    return v;
}

void write_y4m(const std::string& path, const Video& video) {
    const Tensor& fr = video.frames;
    if (fr.rank() != 4 || fr.dim(1) != 3) throw VideoIoError("write_y4m: frames must be (T,3,H,W)");
    const int64_t t = fr.dim(0), h = fr.dim(2), w = fr.dim(3);
    if (w % 2 || h % 2) throw VideoIoError("write_y4m: C420 needs even dimensions");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw VideoIoError("cannot open " + path + " for writing");
    f << "YUV4MPEG2 W" << w << " H" << h << " F" << video.fps_num << ":" << video.fps_den
      << " Ip A1:1 C420jpeg\n";
    const int64_t cw = w / 2, ch = h / 2;
    std::vector<uint8_t> plane(static_cast<size_t>(w * h + 2 * cw * ch));
    auto d = fr.data();
    for (int64_t fi = 0; fi < t; ++fi) {
        f << "FRAME\n";
        const double* rp = d.data() + ((fi * 3 + 0) * h) * w;
        const double* gp = d.data() + ((fi * 3 + 1) * h) * w;
        const double* bp = d.data() + ((fi * 3 + 2) * h) * w;
        uint8_t* yp = plane.data();
        uint8_t* up = yp + w * h;
        uint8_t* vp = up + cw * ch;
        std::vector<double> cbacc(static_cast<size_t>(cw * ch), 0.0);
        std::vector<double> cracc(static_cast<size_t>(cw * ch), 0.0);
        for (int64_t yy = 0; yy < h; ++yy)
            for (int64_t xx = 0; xx < w; ++xx) {
                double y, cb, cr;
                rgb_to_ycbcr(rp[yy * w + xx], gp[yy * w + xx], bp[yy * w + xx], y, cb, cr);
                yp[yy * w + xx] = to_byte(y);
                cbacc[static_cast<size_t>((yy / 2) * cw + xx / 2)] += cb;
                cracc[static_cast<size_t>((yy / 2) * cw + xx / 2)] += cr;
            }
        for (int64_t i = 0; i < cw * ch; ++i) {
            up[i] = to_byte(cbacc[static_cast<size_t>(i)] * 0.25);
            vp[i] = to_byte(cracc[static_cast<size_t>(i)] * 0.25);
        }
        f.write(reinterpret_cast<const char*>(plane.data()),
                static_cast<std::streamsize>(plane.size()));
    }
    if (!f) throw VideoIoError("write failed for " + path);
}

Video read_raw_rgb24(const std::string& path, int64_t width_hint, int64_t height_hint) {
    int64_t w = width_hint, h = height_hint;
    if (w <= 0 || h <= 0) {
        std::ifstream sf(path + ".json");
        if (!sf)
            throw VideoIoError(path + ": raw rgb24 needs a " + path +
                               ".json sidecar with width/height (or explicit --size)");
        nlohmann::json j;
        sf >> j;
        w = j.at("width").get<int64_t>();
        h = j.at("height").get<int64_t>();
    }
    if (w <= 0 || h <= 0) throw VideoIoError(path + ": bad raw dimensions");
    auto bytes = read_file(path);
    const size_t frame_bytes = static_cast<size_t>(3 * w * h);
    if (frame_bytes == 0 || bytes.size() % frame_bytes != 0)
        throw VideoIoError(path + ": size is not a whole number of " + std::to_string(w) + "x" +
                           std::to_string(h) + " frames");
    const int64_t t = static_cast<int64_t>(bytes.size() / frame_bytes);
    if (t == 0) throw VideoIoError(path + ": no frames");

    std::vector<double> all(static_cast<size_t>(t * 3 * h * w));
    for (int64_t fi = 0; fi < t; ++fi) {
        const uint8_t* p = bytes.data() + fi * static_cast<int64_t>(frame_bytes);
        for (int64_t yy = 0; yy < h; ++yy)
            for (int64_t xx = 0; xx < w; ++xx)
                for (int64_t c = 0; c < 3; ++c)
                    all[static_cast<size_t>(((fi * 3 + c) * h + yy) * w + xx)] =
                        p[(yy * w + xx) * 3 + c] / 255.0;
    }
    Video v;
    v.frames = Tensor::from({t, 3, h, w}, std::move(all));
    return v;
}

void write_raw_rgb24(const std::string& path, const Video& video, bool write_sidecar) {
    const Tensor& fr = video.frames;
    if (fr.rank() != 4 || fr.dim(1) != 3)
        throw VideoIoError("write_raw_rgb24: frames must be (T,3,H,W)");
    const int64_t t = fr.dim(0), h = fr.dim(2), w = fr.dim(3);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw VideoIoError("cannot open " + path + " for writing");
    auto d = fr.data();
    std::vector<uint8_t> row(static_cast<size_t>(3 * w));
    for (int64_t fi = 0; fi < t; ++fi)
        for (int64_t yy = 0; yy < h; ++yy) {
            for (int64_t xx = 0; xx < w; ++xx)
                for (int64_t c = 0; c < 3; ++c)
                    row[static_cast<size_t>(xx * 3 + c)] =
                        to_byte(d[static_cast<size_t>(((fi * 3 + c) * h + yy) * w + xx)]);
            f.write(reinterpret_cast<const char*>(row.data()),
                    static_cast<std::streamsize>(row.size()));
        }
    if (!f) throw VideoIoError("write failed for " + path);
    if (write_sidecar) {
        nlohmann::json j;
        j["width"] = w;
        j["height"] = h;
        j["frames"] = t;
        std::ofstream sf(path + ".json", std::ios::trunc);
        sf << j.dump(2) << "\n";
    }
}

namespace {
bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
} // namespace

Video read_video(const std::string& path, int64_t width_hint, int64_t height_hint) {
    if (ends_with(path, ".y4m")) return read_y4m(path);
    return read_raw_rgb24(path, width_hint, height_hint);
}

void write_video(const std::string& path, const Video& video) {
    if (ends_with(path, ".y4m")) {
        write_y4m(path, video);
        return;
    }
    write_raw_rgb24(path, video);
}

} // namespace gtem
