#include "onecast/pipeline/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "onecast/diffusion/diffusion.hpp"
#include "onecast/numerics/gradcheck.hpp"
#include "onecast/pipeline/training.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

namespace onecast::pipeline {

using numerics::derive_seed;
using numerics::GradCheckOptions;
using numerics::Parameter;
using numerics::Shape;
using numerics::Tape;
namespace ops = numerics;

namespace {

using Inputs = std::vector<Parameter>;

Tensor randn(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    return numerics::init_normal(std::move(shape), scale, rng);
}

// Magnitudes in [0.2, 1.2] with random sign, so relu never sits at its kink.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> mag(0.2, 1.2);
    std::bernoulli_distribution sign(0.5);
    for (double& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

Inputs params(std::vector<Tensor> values) {
    Inputs out;
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({"in" + std::to_string(i), std::move(values[i]), {}});
    return out;
}

struct OpCase {
    std::string name;
    std::function<Inputs(std::mt19937_64&)> make;
    std::function<Var(Tape&, Inputs&)> apply;
};

Var p(Tape& t, Inputs& in, std::size_t i) { return t.parameter(in[i]); }

std::vector<OpCase> op_cases() {
    std::vector<OpCase> c;
    c.push_back({"matmul", [](auto& r) { return params({randn({3, 4}, r), randn({4, 2}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::matmul(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"linear", [](auto& r) { return params({randn({3, 4}, r), randn({4, 2}, r), randn({1, 2}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::linear(p(t, in, 0), p(t, in, 1), p(t, in, 2)); }});
    c.push_back({"add", [](auto& r) { return params({randn({3, 4}, r), randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::add(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"sub", [](auto& r) { return params({randn({3, 4}, r), randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::sub(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"mul", [](auto& r) { return params({randn({3, 4}, r), randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::mul(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"scale", [](auto& r) { return params({randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::scale(p(t, in, 0), -1.7); }});
    c.push_back({"add_row", [](auto& r) { return params({randn({3, 4}, r), randn({1, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::add_row(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"mul_row", [](auto& r) { return params({randn({3, 4}, r), randn({1, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::mul_row(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"relu", [](auto& r) { return params({away_from_zero({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::relu(p(t, in, 0)); }});
    c.push_back({"gelu", [](auto& r) { return params({randn({3, 4}, r, 1.5)}); },
                 [](Tape& t, Inputs& in) { return ops::gelu(p(t, in, 0)); }});
    c.push_back({"tanh", [](auto& r) { return params({randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::tanh(p(t, in, 0)); }});
    c.push_back({"transpose", [](auto& r) { return params({randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::transpose(p(t, in, 0)); }});
    c.push_back({"reshape", [](auto& r) { return params({randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::reshape(p(t, in, 0), {2, 6}); }});
    c.push_back({"slice_rows", [](auto& r) { return params({randn({4, 3}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::slice_rows(p(t, in, 0), 1, 2); }});
    c.push_back({"slice_cols", [](auto& r) { return params({randn({3, 5}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::slice_cols(p(t, in, 0), 1, 3); }});
    c.push_back({"concat_rows", [](auto& r) { return params({randn({2, 3}, r), randn({1, 3}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::concat_rows({p(t, in, 0), p(t, in, 1)}); }});
    c.push_back({"concat_cols", [](auto& r) { return params({randn({3, 2}, r), randn({3, 1}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::concat_cols({p(t, in, 0), p(t, in, 1)}); }});
    c.push_back({"gather_rows", [](auto& r) { return params({randn({5, 3}, r)}); },
                 [](Tape& t, Inputs& in) {
                     static const std::vector<int> ids{4, 0, 4, 2};
                     return ops::gather_rows(p(t, in, 0), ids);
                 }});
    c.push_back({"softmax_rows", [](auto& r) { return params({randn({3, 5}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::softmax_rows(p(t, in, 0)); }});
    c.push_back({"layer_norm",
                 [](auto& r) { return params({randn({3, 6}, r), randn({1, 6}, r), randn({1, 6}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::layer_norm(p(t, in, 0), p(t, in, 1), p(t, in, 2)); }});
    c.push_back({"conv1d",
                 [](auto& r) { return params({randn({2, 7}, r), randn({3, 2, 3}, r), randn({3}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::conv1d(p(t, in, 0), p(t, in, 1), p(t, in, 2), 2, 1); }});
    c.push_back({"conv_transpose1d",
                 [](auto& r) { return params({randn({2, 4}, r), randn({2, 3, 3}, r), randn({3}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::conv_transpose1d(p(t, in, 0), p(t, in, 1), p(t, in, 2), 2); }});
    c.push_back({"sum", [](auto& r) { return params({randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::sum(p(t, in, 0)); }});
    c.push_back({"mean", [](auto& r) { return params({randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::mean(p(t, in, 0)); }});
    c.push_back({"mse", [](auto& r) { return params({randn({3, 4}, r), randn({3, 4}, r)}); },
                 [](Tape& t, Inputs& in) { return ops::mse(p(t, in, 0), p(t, in, 1)); }});
    c.push_back({"softmax_cross_entropy", [](auto& r) { return params({randn({4, 5}, r)}); },
                 [](Tape& t, Inputs& in) {
                     static const std::vector<int> targets{1, 4, 0, 2};
                     static const std::vector<double> weights{1, 0, 1, 1};
                     return ops::softmax_cross_entropy(p(t, in, 0), targets, weights);
                 }});
    return c;
}

struct Worst {
    double error = 0.0;
    std::string where;

    void update(const numerics::GradCheckResult& r, std::size_t seed) {
        if (r.max_relative_error >= error) {
            error = r.max_relative_error;
            std::ostringstream os;
            os << "seed " << seed << ", " << r.worst_parameter << "[" << r.worst_index << "] analytic " << r.analytic
               << " numeric " << r.numeric;
            where = os.str();
        }
    }
    CheckResult result(const std::string& name, double tol) const {
        return {name, error < tol, error, where};
    }
};

// Adds `bump * sum(x)` to the first (gradient) evaluation only, so the
// analytic gradient disagrees with the differences.
numerics::LossBuilder faulty(numerics::LossBuilder inner, Parameter& target) {
    auto calls = std::make_shared<int>(0);
    return [inner, &target, calls](Tape& t) {
        Var v = inner(t);
        if ((*calls)++ == 0) v = ops::add(v, ops::scale(ops::sum(t.parameter(target)), 1e-3));
        return v;
    };
}

// Key biases shift every attention score of a query equally, so softmax
// cancels them and their exact gradient is zero. A relative test cannot pass
// on a zero gradient; they are held to an absolute bound instead.
bool is_key_bias(const std::string& id) { return id.size() >= 7 && id.compare(id.size() - 7, 7, ".k.bias") == 0; }

struct Split {
    std::vector<Parameter*> checked;
    std::vector<Parameter*> zero;
};

Split split_key_biases(ParameterStore& store) {
    Split s;
    for (Parameter* q : store.select()) (is_key_bias(q->id) ? s.zero : s.checked).push_back(q);
    return s;
}

double max_abs_grad(ParameterStore& store, const std::vector<Parameter*>& params, const numerics::LossBuilder& loss) {
    store.zero_grad();
    Tape t;
    t.backward(loss(t));
    double m = 0.0;
    for (const Parameter* q : params) {
        for (double g : q->grad.values()) m = std::max(m, std::abs(g));
    }
    store.zero_grad();
    return m;
}

CheckResult check_op(const OpCase& c, const SelfcheckOptions& o, bool fault) {
    Worst worst;
    for (std::size_t s = 0; s < o.gradient_seeds; ++s) {
        std::mt19937_64 rng(derive_seed(derive_seed(o.seed, "op." + c.name), s));
        Inputs in = c.make(rng);
        Tensor weights;
        {
            Tape t;
            weights = randn(c.apply(t, in).shape(), rng);
        }
        numerics::LossBuilder loss = [&](Tape& t) { return ops::sum(ops::mul(c.apply(t, in), t.constant_ref(weights))); };
        if (fault && s == 0) loss = faulty(loss, in[0]);
        std::vector<Parameter*> ptrs;
        for (auto& q : in) ptrs.push_back(&q);
        worst.update(numerics::finite_difference_check(ptrs, loss, {1e-5, 0, s}), s);
    }
    return worst.result("grad." + c.name, o.gradient_tolerance);
}

CheckResult zero_bound(CheckResult r, double zero) {
    constexpr double kZeroGrad = 1e-12;
    std::ostringstream os;
    os << "; key-bias |grad| max " << zero;
    r.detail += os.str();
    r.passed = r.passed && zero < kZeroGrad;
    return r;
}

CheckResult check_attention(const SelfcheckOptions& o) {
    Worst worst;
    double zero = 0.0;
    const numerics::AttentionBlockConfig cfg{8, 2, 16};
    for (std::size_t s = 0; s < o.gradient_seeds; ++s) {
        std::mt19937_64 rng(derive_seed(derive_seed(o.seed, "attention"), s));
        ParameterStore store;
        numerics::init_attention_block(store, "blk", cfg, rng);
        for (auto& [id, prm] : store) {
            for (double& v : prm.value.values()) v += 0.1 * std::normal_distribution<double>()(rng);
        }
        store.create("x", randn({3, 8}, rng));
        const Tensor weights = randn({3, 8}, rng);
        numerics::LossBuilder loss = [&](Tape& t) {
            Binder bind(t, store, [](const std::string&) { return true; });
            Var y = numerics::attention_block(bind, "blk", bind("x"), cfg);
            return ops::sum(ops::mul(y, t.constant_ref(weights)));
        };
        const Split parts = split_key_biases(store);
        worst.update(numerics::finite_difference_check(parts.checked, loss, {1e-5, 0, s}), s);
        zero = std::max(zero, max_abs_grad(store, parts.zero, loss));
    }
    return zero_bound(worst.result("grad.attention_block", o.gradient_tolerance), zero);
}

ModelConfig toy_model_config(bool dual) {
    ModelConfig mc;
    mc.history = 16;
    mc.horizon = 16;
    mc.moving_average = 5;
    mc.natural_periods = {8};
    mc.seasonal_hidden = 6;
    mc.tokenizer.codebook_size = 8;
    mc.tokenizer.code_dim = 4;
    mc.tokenizer.patch_len = 8;
    mc.tokenizer.wave_len = 4;
    mc.tokenizer.hidden = 4;
    mc.predictor_hidden = 8;
    mc.predictor_heads = 2;
    mc.dual_decoder = dual;
    return mc;
}

CheckResult check_joint(const SelfcheckOptions& o, bool dual) {
    Worst worst;
    const std::string name = dual ? "grad.joint_loss" : "grad.joint_loss_single_decoder";
    const std::size_t seeds = std::max<std::size_t>(1, o.gradient_seeds);
    for (std::size_t s = 0; s < seeds; ++s) {
        const std::uint64_t seed = derive_seed(derive_seed(o.seed, name), s);
        TrainConfig tc;
        tc.seed = seed;
        Model model = create_model(toy_model_config(dual), tc, {{"toy", 2}});
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, 1.0);
        for (auto& [id, prm] : model.params) {
            for (double& v : prm.value.values()) v += 0.2 * noise(rng);
        }
        Tensor series({32, 2});
        const double shift = 2.0 * noise(rng);
        for (std::size_t t = 0; t < 32; ++t) {
            for (std::size_t c = 0; c < 2; ++c) {
                series(t, c) = std::sin(0.7 * static_cast<double>(t) + static_cast<double>(c)) + 0.3 * noise(rng) +
                               (t >= 16 ? shift : 0.0);
            }
        }
        data::WindowPair pair{Tensor({16, 2}, std::vector<double>(series.storage().begin(), series.storage().begin() + 32)),
                              Tensor({16, 2}, std::vector<double>(series.storage().begin() + 32, series.storage().end())),
                              0};
        numerics::FrozenTrace trace;
        numerics::LossBuilder loss = [&](Tape& t) {
            trace.begin_pass();
            Binder bind(t, model.params, is_stage1_parameter);
            return joint_loss(bind, model, "toy", pair, 1.0, &trace).total;
        };
        std::vector<Parameter*> ptrs;
        for (Parameter* q : model.params.select()) {
            if (is_stage1_parameter(q->id)) ptrs.push_back(q);
        }
        worst.update(numerics::finite_difference_check(ptrs, loss, {1e-5, 4, s}), s);
    }
    return worst.result(name, o.gradient_tolerance);
}

CheckResult check_diffusion(const SelfcheckOptions& o) {
    Worst worst;
    double zero = 0.0;
    const diffusion::PredictorConfig cfg{6, 4, 8, 2, 2, 2};
    for (std::size_t s = 0; s < o.gradient_seeds; ++s) {
        std::mt19937_64 rng(derive_seed(derive_seed(o.seed, "diffusion"), s));
        const Tensor emb = randn({6, 4}, rng);
        ParameterStore store;
        diffusion::init_predictor(store, cfg, emb, rng);
        for (auto& [id, prm] : store) {
            for (double& v : prm.value.values()) v += 0.1 * std::normal_distribution<double>()(rng);
        }
        std::uniform_int_distribution<int> tok(0, 5);
        std::vector<int> targets(6), ids(6);
        for (int& v : targets) v = tok(rng);
        ids = targets;
        std::vector<bool> masked(6, false);
        masked[3] = masked[5] = true;
        if (std::bernoulli_distribution(0.5)(rng)) masked[4] = true;
        for (std::size_t i = 0; i < 6; ++i) {
            if (masked[i]) ids[i] = tokenizer::kMaskToken;
        }
        numerics::LossBuilder loss = [&](Tape& t) {
            Binder bind(t, store, is_stage2_parameter);
            return diffusion::diffusion_loss(diffusion::predictor_forward(bind, cfg, t.constant_ref(emb), ids), targets,
                                             masked);
        };
        const Split parts = split_key_biases(store);
        worst.update(numerics::finite_difference_check(parts.checked, loss, {1e-5, 0, s}), s);
        zero = std::max(zero, max_abs_grad(store, parts.zero, loss));
    }
    return zero_bound(worst.result("grad.diffusion_loss", o.gradient_tolerance), zero);
}

}  // namespace

std::vector<CheckResult> gradient_suite(const SelfcheckOptions& options) {
    std::vector<CheckResult> out;
    bool first = true;
    for (const OpCase& c : op_cases()) {
        out.push_back(check_op(c, options, options.inject_fault && first));
        first = false;
    }
    out.push_back(check_attention(options));
    out.push_back(check_joint(options, true));
    out.push_back(check_joint(options, false));
    out.push_back(check_diffusion(options));
    return out;
}

CheckResult quantizer_oracle_check(std::size_t instances, std::uint64_t seed) {
    std::size_t mismatches = 0, ties = 0, bad_rows = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        std::mt19937_64 rng(derive_seed(derive_seed(seed, "quantizer"), i));
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
        const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
        // Every other instance lives on a coarse integer grid, where exact
        // distance ties are common; duplicated codes force more.
        const bool grid = i % 2 == 1;
        auto draw = [&](Shape s) {
            Tensor t(std::move(s));
            for (double& v : t.values()) {
                v = grid ? static_cast<double>(std::uniform_int_distribution<int>(-1, 1)(rng))
                         : std::normal_distribution<double>()(rng);
            }
            return t;
        };
        Tensor codes = draw({k, d});
        if (i % 4 == 3) {
            const std::size_t src = std::uniform_int_distribution<std::size_t>(0, k - 2)(rng);
            for (std::size_t j = 0; j < d; ++j) codes(k - 1, j) = codes(src, j);
        }
        Tensor z = draw({n, d});
        if (i % 4 == 2) {
            for (std::size_t j = 0; j < d; ++j) z(0, j) = codes(k / 2, j);
        }

        const auto got = tokenizer::nearest_codes(z, codes);
        Tape tape;
        const auto q = tokenizer::quantize(tape.constant_ref(z), tape.constant_ref(codes), 0.25);
        for (std::size_t r = 0; r < n; ++r) {
            std::vector<double> dist(k);
            for (std::size_t c = 0; c < k; ++c) {
                dist[c] = std::transform_reduce(&z(r, 0), &z(r, 0) + d, &codes(c, 0), 0.0, std::plus<>(),
                                                [](double a, double b) { return (a - b) * (a - b); });
            }
            const auto best = static_cast<int>(std::min_element(dist.begin(), dist.end()) - dist.begin());
            ties += std::count(dist.begin(), dist.end(), dist[static_cast<std::size_t>(best)]) > 1;
            mismatches += got[r] != best;
            for (std::size_t j = 0; j < d; ++j) bad_rows += q.straight.value()(r, j) != codes(got[r], j);
        }
    }
    std::ostringstream os;
    os << instances << " instances, " << ties << " tied rows, " << mismatches << " mismatches, " << bad_rows
       << " z_q entries differing from the codebook";
    return {"quantizer.brute_force", mismatches == 0 && bad_rows == 0 && ties > 0, static_cast<double>(mismatches),
            os.str()};
}

CheckResult scheduler_range_check() {
    std::size_t bad = 0;
    for (auto s : diffusion::kAllSchedulers) {
        for (int i = 0; i <= 1000; ++i) {
            const double v = diffusion::mask_probability(s, i / 1000.0);
            bad += !(v >= 0.0 && v <= 1.0);
        }
    }
    using diffusion::MaskScheduler;
    const bool ends = diffusion::mask_probability(MaskScheduler::Cosine, 0.0) == 1.0 &&
                      std::abs(diffusion::mask_probability(MaskScheduler::Cosine, 1.0)) < 1e-15 &&
                      diffusion::mask_probability(MaskScheduler::Linear, 0.5) == 0.5 &&
                      diffusion::mask_probability(MaskScheduler::Power, 0.5) == 0.75 &&
                      diffusion::mask_probability(MaskScheduler::Sigmoid, 0.0) == 0.0 &&
                      diffusion::mask_probability(MaskScheduler::Sigmoid, 1.0) == 1.0;
    return {"scheduler.range", bad == 0 && ends, static_cast<double>(bad),
            std::to_string(4 * 1001) + " grid points, " + std::to_string(bad) + " outside [0, 1]"};
}

CheckResult absorbing_marginal_check(std::uint64_t seed) {
    // Alphabet {a, b, mask}. Q_t moves a non-mask symbol to mask with prob beta_t.
    double worst = 0.0;
    std::mt19937_64 rng(derive_seed(seed, "absorbing"));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 1 + static_cast<std::size_t>(trial % 8);
        std::vector<double> betas(len);
        for (double& b : betas) b = trial == 0 ? 0.5 : u(rng);
        using M3 = std::array<std::array<double, 3>, 3>;
        M3 bar{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
        for (std::size_t t = 0; t < len; ++t) {
            const double b = betas[t];
            const M3 q{{{1 - b, 0, b}, {0, 1 - b, b}, {0, 0, 1}}};
            M3 next{};
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    for (int m = 0; m < 3; ++m) next[r][c] += bar[r][m] * q[m][c];
                }
            }
            bar = next;
            const double got = diffusion::absorbing_marginal(betas, t + 1);
            worst = std::max({worst, std::abs(bar[0][0] - got), std::abs(bar[1][1] - got),
                              std::abs(bar[0][2] - (1.0 - got)), std::abs(bar[2][2] - 1.0)});
        }
    }
    return {"diffusion.absorbing_marginal", worst <= 1e-12, worst, "max deviation from explicit Q-bar products"};
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options) {
    std::vector<CheckResult> out = gradient_suite(options);
    out.push_back(quantizer_oracle_check(options.quantizer_instances, options.seed));
    out.push_back(scheduler_range_check());
    out.push_back(absorbing_marginal_check(options.seed));
    return out;
}

}  // namespace onecast::pipeline
