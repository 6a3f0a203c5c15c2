#include "gtem/container.hpp"

#include "gtem/coder.hpp"

#include <array>
#include <cstring>

namespace gtem {

namespace {

constexpr char kMagic[4] = {'G', 'T', 'E', 'M'};

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
    uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<uint8_t>& in, size_t& off) {
    if (off + sizeof(T) > in.size()) throw ContainerError("container: truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

void put_segment(std::vector<uint8_t>& out, const std::vector<uint8_t>& seg) {
    put<uint32_t>(out, static_cast<uint32_t>(seg.size()));
    out.insert(out.end(), seg.begin(), seg.end());
}

std::vector<uint8_t> get_segment(const std::vector<uint8_t>& in, size_t& off) {
    uint32_t len = get<uint32_t>(in, off);
    if (off + len > in.size()) throw ContainerError("container: truncated segment");
    std::vector<uint8_t> seg(in.begin() + static_cast<ptrdiff_t>(off),
                             in.begin() + static_cast<ptrdiff_t>(off + len));
    off += len;
    return seg;
}

} // namespace

size_t GopSegments::payload_bytes() const {
    size_t n = z.size();
    for (const auto& fs : frame_slices)
        for (const auto& s : fs) n += s.size();
    return n;
}

std::vector<uint8_t> pack_container(const ContainerHeader& header,
                                    const std::vector<GopSegments>& gops) {
    std::vector<uint8_t> payload;
    for (const GopSegments& g : gops) {
        put_segment(payload, g.z);
        for (const auto& fs : g.frame_slices)
            for (const auto& s : fs) put_segment(payload, s);
    }

    std::vector<uint8_t> out;
    out.reserve(ContainerHeader::kSize + payload.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    put<uint8_t>(out, header.version);
    put<uint8_t>(out, header.flags);
    put<uint16_t>(out, header.width);
    put<uint16_t>(out, header.height);
    put<uint16_t>(out, header.frame_count);
    put<uint8_t>(out, header.gop_size);
    put<uint8_t>(out, header.lambda_index);
    put<uint64_t>(out, header.model_hash);
    put<uint32_t>(out, crc32(payload.data(), payload.size()));
    if (out.size() != ContainerHeader::kSize)
        throw ContainerError("container: header layout broke the 26-byte contract");
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

ParsedContainer parse_container(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < ContainerHeader::kSize) throw ContainerError("container: too small");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ContainerError("container: bad magic");
    size_t off = 4;
    ParsedContainer pc;
    ContainerHeader& h = pc.header;
    h.version = get<uint8_t>(bytes, off);
    if (h.version != ContainerHeader::kVersion)
        throw ContainerError("container: unsupported version " + std::to_string(h.version));
    h.flags = get<uint8_t>(bytes, off);
    h.width = get<uint16_t>(bytes, off);
    h.height = get<uint16_t>(bytes, off);
    h.frame_count = get<uint16_t>(bytes, off);
    h.gop_size = get<uint8_t>(bytes, off);
    h.lambda_index = get<uint8_t>(bytes, off);
    h.model_hash = get<uint64_t>(bytes, off);
    h.crc = get<uint32_t>(bytes, off);

    if (h.gop_size == 0) throw ContainerError("container: zero gop size");
    if (h.frame_count == 0) throw ContainerError("container: zero frame count");
    uint32_t actual = crc32(bytes.data() + off, bytes.size() - off);
    if (actual != h.crc) throw ContainerError("container: checksum mismatch");

    uint32_t frames_left = h.frame_count;
    while (frames_left > 0) {
        uint32_t in_gop = std::min<uint32_t>(frames_left, h.gop_size);
        GopSegments g;
        g.z = get_segment(bytes, off);
        for (uint32_t f = 0; f < in_gop; ++f) {
            std::array<std::vector<uint8_t>, 5> slices;
            for (auto& s : slices) s = get_segment(bytes, off);
            g.frame_slices.push_back(std::move(slices));
        }
        pc.gops.push_back(std::move(g));
        frames_left -= in_gop;
    }
    if (off != bytes.size()) throw ContainerError("container: trailing bytes");
    return pc;
}

} // namespace gtem
