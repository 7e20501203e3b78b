// Acceptance driver: one "criterion N: PASS|FAIL <detail>" line per criterion.
// Usage: onecast_acceptance [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "onecast/data/metrics.hpp"
#include "onecast/data/synthetic.hpp"
#include "onecast/decomposition/decomposition.hpp"
#include "onecast/diffusion/diffusion.hpp"
#include "onecast/error.hpp"
#include "onecast/numerics/parameter.hpp"
#include "onecast/pipeline/checkpoint.hpp"
#include "onecast/pipeline/forecast.hpp"
#include "onecast/pipeline/selfcheck.hpp"
#include "onecast/pipeline/training.hpp"
#include "onecast/seasonal/seasonal.hpp"

using namespace onecast;
using numerics::Tensor;
using pipeline::Model;
using pipeline::ModelConfig;
using pipeline::TrainConfig;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// 1. Token budget table.
Outcome criterion_1() {
    struct Row {
        const char* name;
        long long channels, patching, per_value, text;
    };
    const Row rows[] = {{"CzeLan", 11, 66, 1056, 3168},
                        {"FRED-MD", 107, 642, 10272, 30816},
                        {"Traffic", 862, 5172, 82752, 248256},
                        {"Wike2000", 2000, 12000, 192000, 576000}};
    int bad = 0;
    for (const Row& r : rows) {
        bad += data::token_budget(data::TokenScheme::Patching, 96, 16, r.channels, 3, 437) != r.patching;
        bad += data::token_budget(data::TokenScheme::PerValue, 96, 16, r.channels, 3, 437) != r.per_value;
        bad += data::token_budget(data::TokenScheme::Text, 96, 16, r.channels, 3, 437) != r.text;
        bad += data::token_budget(data::TokenScheme::OneCast, 96, 16, r.channels, 3, 437) != 443;
    }
    return {bad == 0, "16 cells, " + std::to_string(bad) + " mismatches"};
}

// 2. Finite-difference gradient suite over 50 seeds.
Outcome criterion_2() {
    pipeline::SelfcheckOptions o;
    o.gradient_seeds = 50;
    const auto results = pipeline::gradient_suite(o);
    double worst = 0.0;
    std::string worst_name;
    std::size_t failed = 0;
    for (const auto& r : results) {
        if (!r.passed) ++failed;
        if (r.value >= worst) {
            worst = r.value;
            worst_name = r.name;
        }
    }
    return {failed == 0, std::to_string(results.size()) + " checks x 50 seeds, " + std::to_string(failed) +
                             " failed, worst rel err " + fmt(worst) + " (" + worst_name + ")"};
}

// 3. Quantizer against brute force.
Outcome criterion_3() {
    const auto r = pipeline::quantizer_oracle_check(1000, 3);
    return {r.passed, r.detail};
}

ModelConfig base_config(std::size_t history, std::size_t horizon) {
    ModelConfig mc;
    mc.history = history;
    mc.horizon = horizon;
    mc.natural_periods = {24};
    mc.seasonal_hidden = 64;
    mc.tokenizer.codebook_size = 32;
    mc.tokenizer.code_dim = 16;
    mc.tokenizer.hidden = 32;
    mc.tokenizer.blocks = 2;
    mc.predictor_hidden = 64;
    mc.predictor_heads = 4;
    mc.predictor_layers = 2;
    return mc;
}

bool all_zero(const Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](double v) { return v == 0.0; });
}

// 4. L2 stops at the codebook but trains the future decoder.
Outcome criterion_4() {
    TrainConfig tc;
    tc.seed = 4;
    Model m = pipeline::create_model(base_config(96, 96), tc, {{"syn", 2}});
    data::SinusoidRampSpec spec;
    spec.steps = 800;
    const auto d = pipeline::prepare_domain("syn", data::sinusoid_ramp(spec), m.config, 7);
    std::mt19937_64 rng(4);
    std::size_t checked = 0, e_nonzero = 0, m_nonzero = 0, df_zero = 0;
    for (int b = 0; b < 8; ++b) {
        const auto& pair = d.train[rng() % d.train.size()];
        m.params.zero_grad();
        numerics::Tape tape;
        numerics::Binder bind(tape, m.params, [](const std::string&) { return true; });
        const auto terms = pipeline::joint_loss(bind, m, "syn", pair, 1.0);
        tape.backward(terms.l2);
        e_nonzero += !all_zero(m.params.at(tokenizer::kCodebookVectors).grad);
        m_nonzero += !all_zero(m.params.at(tokenizer::kCodebookTransform).grad);
        bool df = false;
        for (auto* p : m.params.select("tokenizer.decoder_f.")) df |= !all_zero(p->grad);
        df_zero += !df;
        ++checked;
    }
    return {e_nonzero == 0 && m_nonzero == 0 && df_zero == 0,
            std::to_string(checked) + " batches: E nonzero " + std::to_string(e_nonzero) + ", M nonzero " +
                std::to_string(m_nonzero) + ", D_f all-zero " + std::to_string(df_zero)};
}

// 5. Corruption rate vs scheduler, absorbing marginal vs matrix products.
Outcome criterion_5() {
    std::mt19937_64 rng(5);
    std::vector<int> ids(10000);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i % 7);
    const tokenizer::TokenSequence seq{ids, 16, 8};
    bool ok = true;
    double worst_z = 0.0;
    for (auto s : diffusion::kAllSchedulers) {
        for (double t : {0.0, 0.25, 0.5, 0.75}) {
            const double p = diffusion::mask_probability(s, t);
            const auto out = diffusion::corrupt(seq, p, rng);
            const double n = static_cast<double>(ids.size());
            const double rate = static_cast<double>(std::count(out.ids.begin(), out.ids.end(), tokenizer::kMaskToken)) / n;
            const double sigma = std::sqrt(p * (1 - p) / n);
            if (sigma == 0.0) {
                ok &= rate == p;
            } else {
                const double z = std::abs(rate - p) / sigma;
                worst_z = std::max(worst_z, z);
                ok &= z <= 3.0;
            }
        }
    }
    const auto marginal = pipeline::absorbing_marginal_check(5);
    return {ok && marginal.passed, "16 scheduler/t cells, worst |z| " + fmt(worst_z) + "; " + marginal.detail + " " + fmt(marginal.value)};
}

// 6. Denoiser round structure.
Outcome criterion_6() {
    std::mt19937_64 rng(6);
    diffusion::PredictorConfig cfg{32, 16, 32, 2, 4, 4};
    Tensor emb({32, 16});
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : emb.values()) v = n(rng);
    numerics::ParameterStore store;
    diffusion::init_predictor(store, cfg, emb, rng);
    tokenizer::TokenSequence hist{std::vector<int>(12), 16, 8};
    for (int& v : hist.ids) v = static_cast<int>(rng() % 32);
    const auto a = diffusion::denoise_infer(store, cfg, emb, hist, 24, 4);
    const auto b = diffusion::denoise_infer(store, cfg, emb, hist, 24, 4);
    bool ok = a.trace.rounds.size() == 4;
    std::set<std::size_t> seen;
    for (const auto& r : a.trace.rounds) {
        ok &= r.positions.size() == 6;
        for (auto p : r.positions) ok &= seen.insert(p).second && p < 24;
    }
    ok &= seen.size() == 24 && !a.tokens.has_mask() && a.tokens.ids == b.tokens.ids;
    std::ostringstream sa, sb;
    a.trace.write_jsonl(sa);
    b.trace.write_jsonl(sb);
    ok &= sa.str() == sb.str();
    return {ok, std::to_string(a.trace.rounds.size()) + " rounds, " + std::to_string(seen.size()) +
                    " distinct positions, mask-free " + (a.tokens.has_mask() ? "no" : "yes") + ", repeat identical " +
                    (a.tokens.ids == b.tokens.ids && sa.str() == sb.str() ? "yes" : "no")};
}

double mean_mse(const Model& m, const std::string& domain, const std::vector<data::WindowPair>& windows,
                bool seasonal_only) {
    double s = 0.0;
    for (const auto& w : windows) {
        const auto f = pipeline::forecast(m, domain, w.history, {.steps = 4, .seasonal_only = seasonal_only});
        s += data::mse_mae(w.future, f.values).first;
    }
    return s / static_cast<double>(windows.size());
}

// Seasonal weight recovery on a noise-free sin(2 pi t / 24).
double recovered_vs() {
    ModelConfig mc = base_config(96, 96);
    mc.moving_average = 24;
    mc.basis_periods = {24};
    mc.seasonal_hidden = 32;
    mc.tokenizer.codebook_size = 16;
    mc.tokenizer.code_dim = 8;
    mc.tokenizer.hidden = 16;
    TrainConfig tc;
    tc.seed = 17;
    tc.epochs = 30;
    tc.batch_size = 8;
    tc.lr = 2e-3;
    tc.window_stride = 24;
    tc.stage = pipeline::Stage::Joint;
    Tensor x({1200, 1});
    const double pi = std::acos(-1.0);
    for (std::size_t t = 0; t < x.rows(); ++t) x(t, 0) = std::sin(2 * pi * static_cast<double>(t) / 24.0);
    Model m = pipeline::create_model(mc, tc, {{"sine", 1}});
    const auto d = pipeline::prepare_domain("sine", x, mc, tc.window_stride);
    pipeline::train_stage1(m, {d});
    // Every window starts at a multiple of 24, so in window time the signal is sin(2 pi t / 24).
    double vs = 0.0;
    for (const auto& w : d.test) {
        const auto dec = decomposition::normalize_and_decompose(w.history, mc.moving_average, mc.epsilon);
        const auto weights = seasonal::predict_weights(m.params, m.seasonal_config(), dec.season);
        const double scale = std::sqrt(dec.stats.sigma[0] * dec.stats.sigma[0] + dec.stats.epsilon);
        vs += weights.sin_weights(0, 0) * scale;
    }
    return vs / static_cast<double>(d.test.size());
}

// 7. End-to-end on sinusoid + ramp + noise.
Outcome criterion_7() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig mc = base_config(96, 96);
    TrainConfig tc;
    tc.seed = 7;
    tc.epochs = 12;
    tc.batch_size = 16;
    tc.lr = 2e-3;
    tc.window_stride = 8;
    tc.diffusion_epochs = 40;
    const Tensor series = data::sinusoid_ramp({});
    Model m = pipeline::create_model(mc, tc, {{"syn", 2}});
    const auto d = pipeline::prepare_domain("syn", series, mc, tc.window_stride);
    pipeline::train_stage1(m, {d});
    pipeline::train_stage2(m, {d});
    std::vector<data::WindowPair> test;
    for (std::size_t i = 0; i < d.test.size(); i += 4) test.push_back(d.test[i]);
    const double full = mean_mse(m, "syn", test, false);
    const double seasonal_only = mean_mse(m, "syn", test, true);
    double naive = 0.0;
    for (const auto& w : test) naive += data::mse_mae(w.future, pipeline::repeat_last(w.history, mc.horizon)).first;
    naive /= static_cast<double>(test.size());
    const double vs = recovered_vs();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = full <= 0.7 * naive && full <= 0.8 * seasonal_only && std::abs(vs - 1.0) <= 0.05;
    return {ok, "test MSE " + fmt(full) + " vs repeat-last " + fmt(naive) + " (" + fmt(100 * (1 - full / naive)) +
                    "% lower), seasonal-only " + fmt(seasonal_only) + " (" + fmt(100 * (1 - full / seasonal_only)) +
                    "% lower); recovered v_s " + fmt(vs) + "; " + fmt(secs) + " s"};
}

// 8. Level shifts: dual decoder vs single-decoder ablation.
double level_shift_amad(bool dual, std::uint64_t seed) {
    ModelConfig mc = base_config(48, 48);
    mc.moving_average = 13;
    mc.dual_decoder = dual;
    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.lr = 2e-3;
    tc.window_stride = 4;
    tc.diffusion_epochs = 20;
    data::LevelShiftSpec spec;
    spec.seed = 100 + seed;
    Model m = pipeline::create_model(mc, tc, {{"shift", 1}});
    const auto d = pipeline::prepare_domain("shift", data::level_shift(spec), mc, tc.window_stride);
    pipeline::train_stage1(m, {d});
    pipeline::train_stage2(m, {d});
    const auto report = pipeline::evaluate(m, "shift", d.test, {});
    return report.horizons.front().amad;
}

Outcome criterion_8() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const double a_dual = level_shift_amad(true, seed);
        const double a_single = level_shift_amad(false, seed);
        wins += a_dual < a_single;
        detail += "seed " + std::to_string(seed) + ": dual " + fmt(a_dual) + " single " + fmt(a_single) + " (delta " +
                  fmt(a_dual - a_single) + "); ";
    }
    return {wins >= 2, detail + std::to_string(wins) + "/3 negative deltas"};
}

Model small_trained(std::uint64_t seed, std::size_t diffusion_epochs) {
    ModelConfig mc = base_config(96, 96);
    mc.tokenizer.codebook_size = 16;
    mc.tokenizer.code_dim = 8;
    mc.tokenizer.hidden = 16;
    mc.seasonal_hidden = 16;
    mc.predictor_hidden = 32;
    mc.predictor_layers = 1;
    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = 2;
    tc.batch_size = 16;
    tc.window_stride = 16;
    tc.diffusion_epochs = diffusion_epochs;
    data::SinusoidRampSpec spec;
    spec.steps = 1200;
    Model m = pipeline::create_model(mc, tc, {{"syn", 2}});
    const auto d = pipeline::prepare_domain("syn", data::sinusoid_ramp(spec), mc, tc.window_stride);
    pipeline::train_stage1(m, {d});
    pipeline::train_stage2(m, {d});
    return m;
}

// 9. Byte-identical checkpoints; save -> load -> forecast is bit-exact.
Outcome criterion_9() {
    const Model a = small_trained(9, 2), b = small_trained(9, 2);
    std::stringstream sa, sb;
    pipeline::save_checkpoint(a, sa);
    pipeline::save_checkpoint(b, sb);
    const bool same_bytes = sa.str() == sb.str();
    const Model back = pipeline::load_checkpoint(sa);
    data::SinusoidRampSpec spec;
    spec.steps = 1200;
    const auto windows = data::make_windows(data::sinusoid_ramp(spec), 96, 96, 96);
    bool same_forecast = true;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto f1 = pipeline::forecast(a, "syn", windows[i].history);
        const auto f2 = pipeline::forecast(back, "syn", windows[i].history);
        same_forecast &= f1.values == f2.values && f1.future_tokens.ids == f2.future_tokens.ids;
    }
    return {same_bytes && same_forecast, "checkpoint " + std::to_string(sa.str().size()) + " bytes, identical " +
                                             (same_bytes ? "yes" : "no") + "; reloaded forecasts identical " +
                                             (same_forecast ? "yes" : "no")};
}

// 10. Inference-step ablation and token-copy learnability for every scheduler.
Outcome criterion_10() {
    const Model m = small_trained(10, 2);
    data::SinusoidRampSpec spec;
    spec.steps = 1200;
    const auto windows = data::make_windows(data::sinusoid_ramp(spec), 96, 96, 48);
    bool steps_ok = true;
    for (std::size_t steps : {1, 4, 8}) {
        for (std::size_t i = 0; i < 3; ++i) {
            const auto f = pipeline::forecast(m, "syn", windows[i].history, {.steps = steps});
            steps_ok &= !f.future_tokens.has_mask() && f.values.all_finite() && f.trace.rounds.size() == steps;
        }
    }
    std::string detail = std::string("steps {1,4,8} mask-free ") + (steps_ok ? "yes" : "no") + "; token copy";
    bool copy_ok = true;
    const data::TokenCopySpec copy{256, 12, 16, 3};
    const auto pairs = data::token_copy_pairs(copy);
    std::vector<pipeline::TokenPair> train, held;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        (i < 200 ? train : held).push_back({pairs[i].first, pairs[i].second});
    }
    for (auto s : diffusion::kAllSchedulers) {
        std::mt19937_64 rng(numerics::derive_seed(10, diffusion::to_string(s)));
        const diffusion::PredictorConfig cfg{16, 16, 64, 2, 4, 2};
        Tensor emb({16, 16});
        std::normal_distribution<double> n(0.0, 1.0);
        for (double& v : emb.values()) v = n(rng);
        TrainConfig tc;
        tc.seed = 10;
        tc.scheduler = s;
        tc.batch_size = 16;
        tc.diffusion_lr = 2e-3;
        tc.diffusion_epochs = 60;
        numerics::ParameterStore store;
        const auto summary = pipeline::train_token_predictor(store, cfg, emb, {train}, held, tc);
        const double acc = pipeline::token_accuracy(store, cfg, emb, held, 4);
        const bool finite = std::isfinite(summary.best_val_loss);
        copy_ok &= finite && acc >= 0.95;
        detail += " " + diffusion::to_string(s) + " " + fmt(100 * acc) + "%";
    }
    return {steps_ok && copy_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only.insert(std::atoi(argv[++i]));
    }
    const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                         criterion_5, criterion_6, criterion_7, criterion_8,
                                                         criterion_9, criterion_10};
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(n)) continue;
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " " << o.detail << std::endl;
        all &= o.pass;
    }
    return all ? 0 : 1;
}
