#include "onecast/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "onecast/error.hpp"

namespace onecast::numerics {
namespace {

double evaluate(const LossBuilder& loss) {
    Tape tape;
    const double v = loss(tape).value().item();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: loss is not finite");
    return v;
}

}  // namespace

GradCheckResult finite_difference_check(std::span<Parameter* const> params, const LossBuilder& loss,
                                        const GradCheckOptions& options) {
    if (!(options.step > 0.0 && options.step <= 1e-2)) {
        throw ConfigError("finite_difference_check: step must lie in (0, 1e-2]");
    }
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var root = loss(tape);
        if (!std::isfinite(root.value().item())) throw NumericError("finite_difference_check: loss is not finite");
        tape.backward(root);
    }

    std::mt19937_64 rng(options.seed);
    GradCheckResult result;
    const double h = options.step;
    for (Parameter* p : params) {
        std::vector<std::size_t> entries(p->value.size());
        std::iota(entries.begin(), entries.end(), std::size_t{0});
        if (options.max_entries_per_parameter && entries.size() > options.max_entries_per_parameter) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(options.max_entries_per_parameter);
        }
        for (std::size_t idx : entries) {
            const double original = p->value[idx];
            p->value[idx] = original + h;
            const double up = evaluate(loss);
            p->value[idx] = original - h;
            const double down = evaluate(loss);
            p->value[idx] = original;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad[idx];
            const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
            ++result.entries_checked;
            if (rel > result.max_relative_error || result.worst_parameter.empty()) {
                result.max_relative_error = std::max(result.max_relative_error, rel);
                result.worst_parameter = p->id;
                result.worst_index = idx;
                result.analytic = analytic;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace onecast::numerics
