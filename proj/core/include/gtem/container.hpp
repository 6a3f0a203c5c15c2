#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtem {

struct ContainerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Little-endian layout, 26 bytes:
//   magic "GTEM" | version u8 | flags u8 | width u16 | height u16
//   | frame_count u16 | gop_size u8 | lambda_index u8 | model_hash u64 | crc32 u32
// flags: bits 0-1 preset id (0 tiny, 1 full), bit 2 conditions-zeroed.
// width/height are the pre-padding source dimensions. crc32 covers every byte
// after the header.
struct ContainerHeader {
    static constexpr uint32_t kSize = 26;
    static constexpr uint8_t kVersion = 1;

    uint8_t version = kVersion;
    uint8_t flags = 0;
    uint16_t width = 0;
    uint16_t height = 0;
    uint16_t frame_count = 0;
    uint8_t gop_size = 8;
    uint8_t lambda_index = 1;
    uint64_t model_hash = 0;
    uint32_t crc = 0;

    uint8_t preset_id() const { return flags & 0x3; }
    bool conditions_zeroed() const { return (flags >> 2) & 1; }
    void set_preset_id(uint8_t id) { flags = static_cast<uint8_t>((flags & ~0x3u) | (id & 0x3u)); }
    void set_conditions_zeroed(bool on) {
        flags = static_cast<uint8_t>(on ? (flags | 0x4u) : (flags & ~0x4u));
    }
};

// One GOP: the side-information segment followed by five slice segments per
// frame, every segment length-prefixed with a u32.
struct GopSegments {
    std::vector<uint8_t> z;
    std::vector<std::array<std::vector<uint8_t>, 5>> frame_slices;

    size_t payload_bytes() const; // segment bytes, framing excluded
};

std::vector<uint8_t> pack_container(const ContainerHeader& header,
                                    const std::vector<GopSegments>& gops);

struct ParsedContainer {
    ContainerHeader header;
    std::vector<GopSegments> gops;
};

// Validates magic, version, crc and framing. Model hash is checked by the
// caller once the checkpoint is loaded.
ParsedContainer parse_container(const std::vector<uint8_t>& bytes);

} // namespace gtem
