#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "onecast/numerics/tensor.hpp"

namespace onecast::data {

using numerics::Tensor;

/// x_c(t) = amplitude sin(2 pi t / period + phase_c) + slope_c t + N(0, noise^2).
/// Channel c gets phase c * pi / 4 and slope slope * (1 + 0.5 c).
struct SinusoidRampSpec {
    std::size_t steps = 4000;
    std::size_t channels = 2;
    double period = 24.0;
    double amplitude = 1.0;
    double slope = 0.01;
    double noise = 0.1;
    std::uint64_t seed = 7;
};
Tensor sinusoid_ramp(const SinusoidRampSpec& spec);

/// Staircase: the level jumps by `step_height` every `step_every` steps, on top
/// of a small sinusoid and noise. A history window followed by a future window
/// sees a systematic shift between their means.
struct LevelShiftSpec {
    std::size_t steps = 2000;
    std::size_t channels = 1;
    std::size_t step_every = 48;
    double step_height = 1.0;
    double period = 24.0;
    double amplitude = 0.3;
    double noise = 0.05;
    std::uint64_t seed = 11;
};
Tensor level_shift(const LevelShiftSpec& spec);

/// Token pairs where the future repeats the history at the same offset.
struct TokenCopySpec {
    std::size_t pairs = 256;
    std::size_t length = 12;
    std::size_t vocabulary = 16;
    std::uint64_t seed = 3;
};
std::vector<std::pair<std::vector<int>, std::vector<int>>> token_copy_pairs(const TokenCopySpec& spec);

}  // namespace onecast::data
