#include "onecast/data/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace onecast::data {

Tensor sinusoid_ramp(const SinusoidRampSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor out({spec.steps, spec.channels});
    for (std::size_t t = 0; t < spec.steps; ++t) {
        for (std::size_t c = 0; c < spec.channels; ++c) {
            const double phase = static_cast<double>(c) * std::numbers::pi / 4.0;
            const double slope = spec.slope * (1.0 + 0.5 * static_cast<double>(c));
            const double tt = static_cast<double>(t);
            out(t, c) = spec.amplitude * std::sin(2.0 * std::numbers::pi * tt / spec.period + phase) + slope * tt +
                        spec.noise * noise(rng);
        }
    }
    return out;
}

Tensor level_shift(const LevelShiftSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor out({spec.steps, spec.channels});
    for (std::size_t t = 0; t < spec.steps; ++t) {
        const double level = spec.step_height * static_cast<double>(t / spec.step_every);
        for (std::size_t c = 0; c < spec.channels; ++c) {
            const double tt = static_cast<double>(t);
            const double phase = static_cast<double>(c) * std::numbers::pi / 3.0;
            out(t, c) = level + spec.amplitude * std::sin(2.0 * std::numbers::pi * tt / spec.period + phase) +
                        spec.noise * noise(rng);
        }
    }
    return out;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> token_copy_pairs(const TokenCopySpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> token(0, static_cast<int>(spec.vocabulary) - 1);
    std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
    out.reserve(spec.pairs);
    for (std::size_t i = 0; i < spec.pairs; ++i) {
        std::vector<int> h(spec.length);
        for (int& v : h) v = token(rng);
        out.emplace_back(h, h);
    }
    return out;
}

}  // namespace onecast::data
