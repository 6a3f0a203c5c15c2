#include "gtem/param.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gtem {

namespace {

constexpr char kMagic[8] = {'G', 'T', 'E', 'M', 'C', 'K', 'P', 'T'};
constexpr uint8_t kVersion = 1;

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
    uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T)); // little-endian host
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<uint8_t>& in, size_t& off) {
    if (off + sizeof(T) > in.size()) throw std::runtime_error("checkpoint: truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

} // namespace

Parameter& ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (by_name_.count(name)) throw std::invalid_argument("parameter name not unique: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(init);
    p->trainable = trainable;
    p->value.set_requires_grad(trainable);
    Parameter* raw = p.get();
    params_.push_back(std::move(p));
    by_name_[name] = raw;
    return *raw;
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParamStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

std::vector<Parameter*> ParamStore::sorted() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& [name, p] : by_name_) out.push_back(p);
    return out;
}

std::vector<const Parameter*> ParamStore::sorted() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : by_name_) out.push_back(p);
    return out;
}

int64_t ParamStore::value_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p->value.clear_grad();
}

std::vector<uint8_t> ParamStore::serialize() const {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put<uint8_t>(out, kVersion);
    put<uint32_t>(out, static_cast<uint32_t>(params_.size()));
    for (const Parameter* p : sorted()) {
        put<uint16_t>(out, static_cast<uint16_t>(p->name.size()));
        out.insert(out.end(), p->name.begin(), p->name.end());
        put<uint8_t>(out, static_cast<uint8_t>(p->value.rank()));
        for (int64_t d : p->value.shape()) put<uint32_t>(out, static_cast<uint32_t>(d));
        for (double v : p->value.data()) put<double>(out, v);
    }
    return out;
}

void ParamStore::deserialize(const std::vector<uint8_t>& bytes) {
    size_t off = 0;
    if (bytes.size() < 13 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    off = 8;
    uint8_t ver = get<uint8_t>(bytes, off);
    if (ver != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    uint32_t count = get<uint32_t>(bytes, off);
    if (count != params_.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (file " +
                                 std::to_string(count) + ", model " +
                                 std::to_string(params_.size()) + ")");
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t len = get<uint16_t>(bytes, off);
        if (off + len > bytes.size()) throw std::runtime_error("checkpoint: truncated");
        std::string name(reinterpret_cast<const char*>(bytes.data() + off), len);
        off += len;
        uint8_t rank = get<uint8_t>(bytes, off);
        Shape shape(rank);
        for (uint8_t d = 0; d < rank; ++d) shape[d] = get<uint32_t>(bytes, off);
        Parameter* p = find(name);
        if (!p) throw std::runtime_error("checkpoint: unknown parameter " + name);
        if (p->value.shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name + " (file " +
                                     shape_str(shape) + ", model " + shape_str(p->value.shape()) +
                                     ")");
        auto dst = p->value.raw();
        for (int64_t k = 0; k < p->value.numel(); ++k)
            dst[static_cast<size_t>(k)] = get<double>(bytes, off);
    }
    if (off != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
}

void ParamStore::save(const std::string& path) const {
    auto bytes = serialize();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

void ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    auto size = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> bytes(size);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw std::runtime_error("checkpoint: read failed for " + path);
    deserialize(bytes);
}

uint64_t ParamStore::content_hash() const {
    auto bytes = serialize();
    return fnv1a64(bytes.data(), bytes.size());
}

uint64_t fnv1a64(const uint8_t* data, size_t len) {
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

Tensor init_uniform_fan(Shape shape, int64_t fan_in, Rng& rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(fan_in, 1)));
    int64_t n = shape_numel(shape);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(-s, s);
    return Tensor::from(std::move(shape), std::move(v));
}

Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }

Tensor init_ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

} // namespace gtem
