#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gtem {

// 16-bit-precision cumulative frequencies over [-L, L] plus a trailing
// escape symbol. cum has alphabet_size()+1 entries, cum.front()==0,
// cum.back()==65536, strictly increasing (every symbol keeps frequency >= 1).
struct CdfTable {
    int32_t bound = 0; // L
    std::vector<uint32_t> cum;

    int64_t alphabet_size() const { return 2 * static_cast<int64_t>(bound) + 2; }
    int64_t escape_index() const { return alphabet_size() - 1; }
    uint32_t freq(int64_t sym) const { return cum[sym + 1] - cum[sym]; }
};

inline constexpr uint32_t kCdfTotal = 1u << 16;
inline constexpr int32_t kDefaultAlphabetBound = 255;

// Quantized CDF of a +-0.5 integrated Gaussian. Uses floats only for the
// initial probability evaluation; everything after the float->int step is
// integer arithmetic so encoder and decoder tables agree bit for bit.
CdfTable build_cdf(double mu, double sigma, int32_t bound = kDefaultAlphabetBound);
// In-place variant reusing the table's storage across elements.
void build_cdf_into(double mu, double sigma, int32_t bound, CdfTable& table);

struct CoderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Carry-propagating range coder: 32-bit range, byte-wise renormalization,
// 64-bit low register so carries resolve in the pending-byte run.
class RangeEncoder {
public:
    explicit RangeEncoder(std::vector<uint8_t>& out) : out_(out) {}

    void encode(uint32_t cum_lo, uint32_t freq, uint32_t total = kCdfTotal);
    void encode_symbol(int64_t sym, const CdfTable& table);
    void encode_raw_byte(uint8_t b); // uniform bypass
    void encode_raw_u32(uint32_t v);
    void finish(); // flush; at most 6 bytes

private:
    void shift_low();

    std::vector<uint8_t>& out_;
    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint8_t cache_ = 0;
    uint64_t cache_size_ = 1;
    bool finished_ = false;
};

class RangeDecoder {
public:
    RangeDecoder(const uint8_t* data, size_t size);

    uint32_t decode_freq(uint32_t total = kCdfTotal);
    void decode_update(uint32_t cum_lo, uint32_t freq);
    int64_t decode_symbol(const CdfTable& table);
    uint8_t decode_raw_byte();
    uint32_t decode_raw_u32();
    size_t consumed() const { return pos_; }

private:
    uint8_t next_byte();

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    uint32_t code_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t last_div_ = 0;
};

// Symbol-level helpers used for latents: values beyond +-bound are escaped
// and carried verbatim as 32-bit bypass payloads.
void encode_value(RangeEncoder& enc, int64_t value, const CdfTable& table);
int64_t decode_value(RangeDecoder& dec, const CdfTable& table);

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

} // namespace gtem
