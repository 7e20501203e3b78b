#include <benchmark/benchmark.h>

#include <random>

#include "onecast/data/synthetic.hpp"
#include "onecast/decomposition/decomposition.hpp"
#include "onecast/diffusion/diffusion.hpp"
#include "onecast/numerics/ops.hpp"
#include "onecast/pipeline/forecast.hpp"
#include "onecast/pipeline/training.hpp"
#include "onecast/seasonal/seasonal.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

using namespace onecast;
using numerics::Tensor;

namespace {

Tensor random_tensor(numerics::Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = n(rng);
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
    for (auto _ : state) {
        numerics::Tape t;
        benchmark::DoNotOptimize(numerics::matmul(t.constant_ref(a), t.constant_ref(b)).value().values().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MovingAverage(benchmark::State& state) {
    const Tensor x = random_tensor({static_cast<std::size_t>(state.range(0)), 8}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(decomposition::moving_average_decompose(x, 25));
}
BENCHMARK(BM_MovingAverage)->Arg(96)->Arg(720);

void BM_EvaluateBasis(benchmark::State& state) {
    const auto basis = seasonal::build_basis(seasonal::harmonic_periods({24, 168}));
    const seasonal::SeasonalWeights w{random_tensor({basis.size(), 8}, 4), random_tensor({basis.size(), 8}, 5)};
    for (auto _ : state) benchmark::DoNotOptimize(seasonal::evaluate_basis(basis, w, 96, 96));
}
BENCHMARK(BM_EvaluateBasis);

void BM_NearestCodes(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    const Tensor z = random_tensor({12, 64}, 6), codes = random_tensor({k, 64}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(tokenizer::nearest_codes(z, codes));
}
BENCHMARK(BM_NearestCodes)->Arg(128)->Arg(512);

void BM_Tokenize(benchmark::State& state) {
    tokenizer::TokenizerConfig cfg;
    std::mt19937_64 rng(8);
    numerics::ParameterStore store;
    tokenizer::init_tokenizer(store, cfg, rng);
    tokenizer::init_domain_adapters(store, cfg, "d", 7, rng);
    const Tensor trend = random_tensor({96, 7}, 9);
    for (auto _ : state) benchmark::DoNotOptimize(tokenizer::tokenize(store, cfg, "d", trend));
}
BENCHMARK(BM_Tokenize);

void BM_DenoiseInfer(benchmark::State& state) {
    const diffusion::PredictorConfig cfg;
    std::mt19937_64 rng(10);
    const Tensor emb = random_tensor({cfg.vocabulary, cfg.code_dim}, 11);
    numerics::ParameterStore store;
    diffusion::init_predictor(store, cfg, emb, rng);
    tokenizer::TokenSequence hist{std::vector<int>(12, 3), 16, 8};
    const auto steps = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(diffusion::denoise_infer(store, cfg, emb, hist, 12, steps));
}
BENCHMARK(BM_DenoiseInfer)->Arg(1)->Arg(4)->Arg(8);

void BM_JointTrainStep(benchmark::State& state) {
    pipeline::ModelConfig mc;
    mc.tokenizer.codebook_size = 32;
    mc.tokenizer.code_dim = 16;
    mc.tokenizer.hidden = 32;
    pipeline::Model m = pipeline::create_model(mc, {}, {{"syn", 2}});
    data::SinusoidRampSpec spec;
    spec.steps = 600;
    const auto d = pipeline::prepare_domain("syn", data::sinusoid_ramp(spec), mc, 16);
    std::vector<const data::WindowPair*> batch;
    for (std::size_t i = 0; i < 8; ++i) batch.push_back(&d.train[i]);
    pipeline::JointTrainer trainer(m);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step("syn", batch));
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_JointTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
