#include "onecast/numerics/optimizer.hpp"

#include <cmath>

namespace onecast::numerics {

void AdamW::step(const std::vector<Parameter*>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
        auto [it, inserted] = moments_.try_emplace(p->id);
        Moments& mo = it->second;
        if (inserted) {
            mo.m = Tensor(p->value.shape());
            mo.v = Tensor(p->value.shape());
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
            mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
            p->value[i] -= lr * cfg_.weight_decay * p->value[i];
            p->value[i] -= lr * (mo.m[i] / bc1) / (std::sqrt(mo.v[i] / bc2) + cfg_.eps);
        }
    }
}

double decayed_lr(double base, double factor, std::size_t every, std::size_t step) {
    if (every == 0) return base;
    return base * std::pow(factor, static_cast<double>(step / every));
}

}  // namespace onecast::numerics
