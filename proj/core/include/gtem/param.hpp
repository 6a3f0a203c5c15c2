#pragma once

#include "gtem/rng.hpp"
#include "gtem/tensor.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace gtem {

struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
};

// Named parameter registry. Checkpoint records are ordered by name so the
// serialized form (and the model hash derived from it) is deterministic.
class ParamStore {
public:
    Parameter& add(const std::string& name, Tensor init, bool trainable = true);

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    // name-sorted iteration
    std::vector<Parameter*> sorted();
    std::vector<const Parameter*> sorted() const;

    size_t size() const { return params_.size(); }
    int64_t value_count() const;

    void zero_grad();

    std::vector<uint8_t> serialize() const;
    void deserialize(const std::vector<uint8_t>& bytes);
    void save(const std::string& path) const;
    void load(const std::string& path);

    // FNV-1a over the serialized records; identifies the weights a bitstream
    // was produced with.
    uint64_t content_hash() const;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, Parameter*> by_name_;
};

// common initializers
Tensor init_uniform_fan(Shape shape, int64_t fan_in, Rng& rng);
Tensor init_zeros(Shape shape);
Tensor init_ones(Shape shape);

uint64_t fnv1a64(const uint8_t* data, size_t len);

} // namespace gtem
