#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "onecast/numerics/tensor.hpp"

namespace onecast::numerics {

struct Parameter {
    std::string id;
    Tensor value;
    Tensor grad;

    void zero_grad() { grad = Tensor(value.shape()); }
};

/// Owns every learnable tensor of a model, keyed by a stable dotted id
/// ("tokenizer.encoder.block0.weight"). Iteration order is the key order, so
/// anything derived from a walk over the store is deterministic.
class ParameterStore {
public:
    Parameter& create(const std::string& id, Tensor value);
    Parameter& at(const std::string& id);
    const Parameter& at(const std::string& id) const;
    bool contains(const std::string& id) const { return params_.count(id) != 0; }
    void erase_prefix(const std::string& prefix);

    std::vector<std::string> ids(const std::string& prefix = "") const;
    std::vector<Parameter*> select(const std::string& prefix = "");
    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count(const std::string& prefix = "") const;

    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend bool operator==(const ParameterStore& a, const ParameterStore& b);

private:
    std::map<std::string, Parameter> params_;
};

bool has_prefix(const std::string& s, const std::string& prefix);

// Initializers. All draw from the supplied engine so seeded runs repeat exactly.
Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng);
Tensor init_uniform(Shape shape, double bound, std::mt19937_64& rng);
/// Uniform in +-sqrt(6/(fan_in+fan_out)).
Tensor init_glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Derives an independent 64-bit stream seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag);

}  // namespace onecast::numerics
