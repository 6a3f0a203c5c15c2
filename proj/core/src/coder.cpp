#include "gtem/coder.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gtem {

namespace {

constexpr uint32_t kTopValue = 1u << 24;

double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)); }

} // namespace

void build_cdf_into(double mu, double sigma, int32_t bound, CdfTable& table) {
    if (sigma <= 0.0) throw std::invalid_argument("build_cdf: sigma must be positive");
    if (bound < 1) throw std::invalid_argument("build_cdf: bound must be >= 1");
    // Trim the alphabet to the distribution's support: symbols past ~4.5
    // sigma carry less than a single count each, and a table full of forced
    // minimum-frequency entries would cost ~1e-2 bits/symbol of KL. The
    // escape symbol covers the trimmed tails.
    double reach = std::abs(mu) + 4.5 * sigma;
    if (reach < static_cast<double>(bound))
        bound = std::max<int32_t>(1, static_cast<int32_t>(std::ceil(reach)));
    table.bound = bound;
    const int64_t nsym = table.alphabet_size();
    std::vector<uint32_t>& cum = table.cum;
    cum.assign(static_cast<size_t>(nsym + 1), 0);

    // single float->int quantization step, integer fixups afterwards
    std::vector<uint32_t>& freq = cum; // build frequencies in cum[1..nsym]
    uint64_t total = 0;
    double inv_sigma = 1.0 / sigma;
    double prev = gauss_cdf((-bound - 0.5 - mu) * inv_sigma);
    double p_low_tail = prev;
    for (int32_t s = -bound; s <= bound; ++s) {
        double cur = gauss_cdf((s + 0.5 - mu) * inv_sigma);
        double p = cur - prev;
        prev = cur;
        uint32_t f = static_cast<uint32_t>(std::llround(p * static_cast<double>(kCdfTotal)));
        if (f < 1) f = 1;
        freq[static_cast<size_t>(s + bound + 1)] = f;
        total += f;
    }
    double p_esc = p_low_tail + (1.0 - prev);
    uint32_t fe = static_cast<uint32_t>(std::llround(p_esc * static_cast<double>(kCdfTotal)));
    if (fe < 1) fe = 1;
    freq[static_cast<size_t>(nsym)] = fe;
    total += fe;

    // force the exact 2^16 total against the largest buckets
    while (total != kCdfTotal) {
        size_t best = 1;
        for (size_t i = 2; i <= static_cast<size_t>(nsym); ++i)
            if (freq[i] > freq[best]) best = i;
        if (total > kCdfTotal) {
            uint64_t excess = total - kCdfTotal;
            uint32_t take = static_cast<uint32_t>(
                std::min<uint64_t>(excess, freq[best] > 1 ? freq[best] - 1 : 0));
            if (take == 0) throw CoderError("build_cdf: cannot normalize table");
            freq[best] -= take;
            total -= take;
        } else {
            uint32_t give = static_cast<uint32_t>(kCdfTotal - total);
            freq[best] += give;
            total += give;
        }
    }

    uint32_t acc = 0;
    cum[0] = 0;
    for (size_t i = 1; i <= static_cast<size_t>(nsym); ++i) {
        acc += freq[i];
        cum[i] = acc;
    }
    cum[static_cast<size_t>(nsym)] = kCdfTotal;
}

CdfTable build_cdf(double mu, double sigma, int32_t bound) {
    CdfTable t;
    build_cdf_into(mu, sigma, bound, t);
    return t;
}

void RangeEncoder::shift_low() {
    if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        uint8_t carry = static_cast<uint8_t>(low_ >> 32);
        uint8_t b = cache_;
        do {
            out_.push_back(static_cast<uint8_t>(b + carry));
            b = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFull) << 8;
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t freq, uint32_t total) {
    if (finished_) throw CoderError("range encoder already finished");
    if (freq == 0 || cum_lo + freq > total) throw CoderError("range encoder: bad interval");
    range_ /= total;
    low_ += static_cast<uint64_t>(cum_lo) * range_;
    range_ *= freq;
    while (range_ < kTopValue) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::encode_symbol(int64_t sym, const CdfTable& table) {
    if (sym < 0 || sym >= table.alphabet_size()) throw CoderError("encode_symbol: out of alphabet");
    encode(table.cum[static_cast<size_t>(sym)], table.freq(sym));
}

void RangeEncoder::encode_raw_byte(uint8_t b) {
    encode(static_cast<uint32_t>(b) << 8, 1u << 8);
}

void RangeEncoder::encode_raw_u32(uint32_t v) {
    encode_raw_byte(static_cast<uint8_t>(v >> 24));
    encode_raw_byte(static_cast<uint8_t>(v >> 16));
    encode_raw_byte(static_cast<uint8_t>(v >> 8));
    encode_raw_byte(static_cast<uint8_t>(v));
}

void RangeEncoder::finish() {
    if (finished_) return;
    for (int i = 0; i < 5; ++i) shift_low();
    finished_ = true;
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
    // first byte is the encoder's initial cache and always reads back as 0
    for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    if (pos_ < size_) return data_[pos_++];
    ++pos_; // reading past the flush tail is legal while draining the register
    return 0;
}

uint32_t RangeDecoder::decode_freq(uint32_t total) {
    last_div_ = range_ / total;
    uint32_t v = code_ / last_div_;
    return std::min(v, total - 1);
}

void RangeDecoder::decode_update(uint32_t cum_lo, uint32_t freq) {
    code_ -= cum_lo * last_div_;
    range_ = last_div_ * freq;
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

int64_t RangeDecoder::decode_symbol(const CdfTable& table) {
    uint32_t f = decode_freq();
    auto it = std::upper_bound(table.cum.begin(), table.cum.end(), f);
    int64_t sym = static_cast<int64_t>(it - table.cum.begin()) - 1;
    if (sym < 0 || sym >= table.alphabet_size()) throw CoderError("decode_symbol: corrupt stream");
    decode_update(table.cum[static_cast<size_t>(sym)], table.freq(sym));
    return sym;
}

uint8_t RangeDecoder::decode_raw_byte() {
    uint32_t f = decode_freq();
    uint8_t b = static_cast<uint8_t>(f >> 8);
    decode_update(static_cast<uint32_t>(b) << 8, 1u << 8);
    return b;
}

uint32_t RangeDecoder::decode_raw_u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | decode_raw_byte();
    return v;
}

void encode_value(RangeEncoder& enc, int64_t value, const CdfTable& table) {
    if (value >= -table.bound && value <= table.bound) {
        enc.encode_symbol(value + table.bound, table);
    } else {
        if (value < INT32_MIN || value > INT32_MAX)
            throw CoderError("encode_value: value outside 32-bit bypass range");
        enc.encode_symbol(table.escape_index(), table);
        enc.encode_raw_u32(static_cast<uint32_t>(static_cast<int32_t>(value)));
    }
}

int64_t decode_value(RangeDecoder& dec, const CdfTable& table) {
    int64_t sym = dec.decode_symbol(table);
    if (sym == table.escape_index())
        return static_cast<int32_t>(dec.decode_raw_u32());
    return sym - table.bound;
}

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

} // namespace gtem
