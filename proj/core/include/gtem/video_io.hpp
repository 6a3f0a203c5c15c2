#pragma once

#include "gtem/tensor.hpp"

#include <stdexcept>
#include <string>

namespace gtem {

struct VideoIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Frames are unit-interval RGB doubles, (T,3,H,W).
struct Video {
    Tensor frames;
    int64_t fps_num = 25;
    int64_t fps_den = 1;
};

// YUV4MPEG2, C420 only (jpeg/mpeg2/paldv siting tags accepted and treated
// alike). Chroma is upsampled nearest on read, averaged 2x2 on write;
// conversion is BT.601 full range.
Video read_y4m(const std::string& path);
void write_y4m(const std::string& path, const Video& video);

// Raw interleaved RGB24 with a JSON sidecar "<path>.json" carrying
// {"width": W, "height": H}; frame count comes from the file size.
Video read_raw_rgb24(const std::string& path, int64_t width_hint = 0, int64_t height_hint = 0);
void write_raw_rgb24(const std::string& path, const Video& video, bool write_sidecar = true);

// dispatch on extension: .y4m or raw rgb24
Video read_video(const std::string& path, int64_t width_hint = 0, int64_t height_hint = 0);
void write_video(const std::string& path, const Video& video);

} // namespace gtem
