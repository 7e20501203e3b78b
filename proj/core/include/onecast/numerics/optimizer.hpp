#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "onecast/numerics/parameter.hpp"

namespace onecast::numerics {

struct AdamWConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

/// Adam with decoupled weight decay. Moments are kept per parameter id.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    /// One update of every listed parameter at learning rate `lr`.
    void step(const std::vector<Parameter*>& params, double lr);

    std::size_t steps() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamWConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

/// Multiplicative step decay: base * factor^floor(step / every).
double decayed_lr(double base, double factor, std::size_t every, std::size_t step);

}  // namespace onecast::numerics
