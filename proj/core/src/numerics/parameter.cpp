#include "onecast/numerics/parameter.hpp"

#include <cmath>

#include "onecast/error.hpp"

namespace onecast::numerics {

bool has_prefix(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

Parameter& ParameterStore::create(const std::string& id, Tensor value) {
    if (params_.count(id)) throw ConfigError("duplicate parameter id '" + id + "'");
    Parameter p{id, std::move(value), {}};
    p.zero_grad();
    return params_.emplace(id, std::move(p)).first->second;
}

Parameter& ParameterStore::at(const std::string& id) {
    auto it = params_.find(id);
    if (it == params_.end()) throw CheckpointError("missing parameter '" + id + "'");
    return it->second;
}

const Parameter& ParameterStore::at(const std::string& id) const {
    auto it = params_.find(id);
    if (it == params_.end()) throw CheckpointError("missing parameter '" + id + "'");
    return it->second;
}

void ParameterStore::erase_prefix(const std::string& prefix) {
    for (auto it = params_.begin(); it != params_.end();) {
        it = has_prefix(it->first, prefix) ? params_.erase(it) : std::next(it);
    }
}

std::vector<std::string> ParameterStore::ids(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [id, _] : params_)
        if (has_prefix(id, prefix)) out.push_back(id);
    return out;
}

std::vector<Parameter*> ParameterStore::select(const std::string& prefix) {
    std::vector<Parameter*> out;
    for (auto& [id, p] : params_)
        if (has_prefix(id, prefix)) out.push_back(&p);
    return out;
}

std::size_t ParameterStore::scalar_count(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [id, p] : params_)
        if (has_prefix(id, prefix)) n += p.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (auto ia = a.params_.begin(), ib = b.params_.begin(); ia != a.params_.end(); ++ia, ++ib) {
        if (ia->first != ib->first || !(ia->second.value == ib->second.value)) return false;
    }
    return true;
}

Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

Tensor init_uniform(Shape shape, double bound, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

Tensor init_glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return init_uniform(std::move(shape), bound, rng);
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return splitmix64(splitmix64(base) ^ splitmix64(tag + 0x632BE59BD9B4E019ULL));
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
    // FNV-1a; std::hash is not stable across library versions.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return derive_seed(base, h);
}

}  // namespace onecast::numerics
