#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "onecast/numerics/parameter.hpp"
#include "onecast/numerics/tape.hpp"

namespace onecast::numerics {

struct GradCheckOptions {
    double step = 1e-5;
    /// 0 checks every scalar; otherwise a seeded subset per parameter.
    std::size_t max_entries_per_parameter = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t entries_checked = 0;
};

/// Builds the scalar loss on a fresh tape. Called once with gradients and
/// then repeatedly for perturbed evaluations.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients against central differences:
/// max over checked entries of |analytic - numeric| / (|analytic| + 1e-8).
/// Parameter values are restored exactly afterwards.
GradCheckResult finite_difference_check(std::span<Parameter* const> params, const LossBuilder& loss,
                                        const GradCheckOptions& options = {});

}  // namespace onecast::numerics
