#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace onecast::pipeline {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;  // worst error or mismatch count, check-specific
    std::string detail;
};

struct SelfcheckOptions {
    std::size_t gradient_seeds = 50;
    double gradient_tolerance = 1e-4;
    std::size_t quantizer_instances = 1000;
    std::uint64_t seed = 20240601;
    /// Test hook: corrupts one analytic gradient so the suite must fail.
    bool inject_fault = false;
};

/// Finite-difference check of every differentiable op, the attention block,
/// the composed joint loss (dual and single decoder) and the diffusion loss.
std::vector<CheckResult> gradient_suite(const SelfcheckOptions& options);

/// Nearest-code assignment against exhaustive search, with engineered ties.
CheckResult quantizer_oracle_check(std::size_t instances, std::uint64_t seed);

/// All schedulers stay in [0, 1] on a 1,001-point grid.
CheckResult scheduler_range_check();

/// absorbing_marginal against explicit transition-matrix products.
CheckResult absorbing_marginal_check(std::uint64_t seed);

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options);

}  // namespace onecast::pipeline
