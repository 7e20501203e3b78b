#include "onecast/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "onecast/error.hpp"
#include "onecast/numerics/ops.hpp"

namespace onecast::diffusion {

using namespace numerics;

namespace {
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string block_prefix(std::size_t i) { return kPredictorPrefix + ".block" + std::to_string(i); }
}  // namespace

double mask_probability(MaskScheduler s, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("mask_probability: t = " + std::to_string(t) + " outside [0, 1]");
    switch (s) {
        case MaskScheduler::Cosine:
            return std::clamp(std::cos(t * std::numbers::pi / 2.0), 0.0, 1.0);
        case MaskScheduler::Linear:
            return 1.0 - t;
        case MaskScheduler::Power:
            return 1.0 - t * t;
        case MaskScheduler::Sigmoid: {
            const double lo = logistic(0.0), hi = logistic(1.0);
            return std::clamp((logistic(t) - lo) / (hi - lo), 0.0, 1.0);
        }
    }
    return 0.0;
}

std::string to_string(MaskScheduler s) {
    switch (s) {
        case MaskScheduler::Cosine: return "cosine";
        case MaskScheduler::Linear: return "linear";
        case MaskScheduler::Power: return "power";
        case MaskScheduler::Sigmoid: return "sigmoid";
    }
    return "?";
}

MaskScheduler parse_scheduler(const std::string& name) {
    for (MaskScheduler s : kAllSchedulers)
        if (to_string(s) == name) return s;
    throw ConfigError("unknown mask scheduler '" + name + "' (expected cosine, linear, power or sigmoid)");
}

TokenSequence corrupt(const TokenSequence& future, double p_mask, std::mt19937_64& rng) {
    if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw ConfigError("corrupt: p_mask outside [0, 1]");
    if (future.has_mask()) throw ConfigError("corrupt: input already contains masks");
    TokenSequence out = future;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int& id : out.ids)
        if (unit(rng) < p_mask) id = kMaskToken;
    return out;
}

double absorbing_marginal(std::span<const double> betas, std::size_t step) {
    if (step > betas.size()) throw ConfigError("absorbing_marginal: step beyond the schedule");
    double survive = 1.0;
    for (std::size_t i = 0; i < step; ++i) {
        if (!(betas[i] >= 0.0 && betas[i] <= 1.0)) throw ConfigError("absorbing_marginal: beta outside [0, 1]");
        survive *= 1.0 - betas[i];
    }
    return survive;
}

void PredictorConfig::validate() const {
    if (vocabulary < 2) throw ConfigError("predictor: vocabulary must be >= 2");
    if (layers < 1) throw ConfigError("predictor: need at least one layer");
    if (heads == 0 || hidden % heads != 0) {
        throw ConfigError("predictor: hidden " + std::to_string(hidden) + " not divisible by heads " +
                          std::to_string(heads));
    }
}

void init_predictor(ParameterStore& store, const PredictorConfig& cfg, const Tensor& token_embeddings,
                    std::mt19937_64& rng) {
    cfg.validate();
    if (token_embeddings.rows() != cfg.vocabulary || token_embeddings.cols() != cfg.code_dim) {
        throw DimensionError("init_predictor: embeddings " + shape_string(token_embeddings.shape()) +
                             " vs vocabulary " + std::to_string(cfg.vocabulary) + " x " +
                             std::to_string(cfg.code_dim));
    }
    Tensor mean_embedding({1, cfg.code_dim});
    for (std::size_t k = 0; k < cfg.vocabulary; ++k)
        for (std::size_t j = 0; j < cfg.code_dim; ++j) mean_embedding[j] += token_embeddings(k, j);
    for (auto& v : mean_embedding.values()) v /= static_cast<double>(cfg.vocabulary);
    store.create(kMaskEmbedding, std::move(mean_embedding));

    init_linear(store, kPredictorPrefix + ".input", cfg.code_dim, cfg.hidden, rng);
    for (std::size_t i = 0; i < cfg.layers; ++i) init_attention_block(store, block_prefix(i), cfg.block(), rng);
    store.create(kPredictorPrefix + ".final_ln.gamma", Tensor({1, cfg.hidden}, 1.0));
    store.create(kPredictorPrefix + ".final_ln.beta", Tensor({1, cfg.hidden}));
    init_linear(store, kPredictorPrefix + ".head", cfg.hidden, cfg.vocabulary, rng);
}

bool has_predictor(const ParameterStore& store) { return store.contains(kMaskEmbedding); }

Var predictor_forward(const Binder& bind, const PredictorConfig& cfg, Var token_embeddings, std::span<const int> ids) {
    if (ids.empty()) throw DimensionError("predictor_forward: empty token sequence");
    std::vector<int> rows(ids.begin(), ids.end());
    for (int& id : rows) {
        if (id == kMaskToken) {
            id = static_cast<int>(cfg.vocabulary);
        } else if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocabulary) {
            throw VocabularyError("predictor_forward: token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(cfg.vocabulary));
        }
    }
    Tape& tape = bind.tape();
    Var table = concat_rows({token_embeddings, bind(kMaskEmbedding)});
    Var z = gather_rows(table, rows);
    Var x = apply_linear(bind, kPredictorPrefix + ".input", z);
    x = add(x, tape.constant(sinusoidal_positions(rows.size(), cfg.hidden)));
    for (std::size_t i = 0; i < cfg.layers; ++i) x = attention_block(bind, block_prefix(i), x, cfg.block());
    x = layer_norm(x, bind(kPredictorPrefix + ".final_ln.gamma"), bind(kPredictorPrefix + ".final_ln.beta"));
    return apply_linear(bind, kPredictorPrefix + ".head", x);
}

Var diffusion_loss(Var logits, std::span<const int> targets, const std::vector<bool>& masked) {
    if (masked.size() != targets.size()) throw DimensionError("diffusion_loss: mask indicator length mismatch");
    std::vector<double> weights(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i) weights[i] = masked[i] ? 1.0 : 0.0;
    if (std::none_of(masked.begin(), masked.end(), [](bool b) { return b; })) {
        throw DegenerateBatchError("diffusion_loss: no masked positions");
    }
    return softmax_cross_entropy(logits, targets, weights);
}

void DenoiseTrace::write_jsonl(std::ostream& os) const {
    for (const DenoiseRound& r : rounds) {
        nlohmann::json j;
        j["round"] = r.round;
        j["positions"] = r.positions;
        j["ids"] = r.ids;
        j["confidences"] = r.confidences;
        os << j.dump() << '\n';
    }
}

DenoiseResult denoise_infer(const ParameterStore& store, const PredictorConfig& cfg, const Tensor& token_embeddings,
                            const TokenSequence& history, std::size_t n_future, std::size_t steps,
                            const std::vector<bool>& allowed) {
    if (steps < 1) throw ConfigError("denoise_infer: need at least one step");
    if (n_future < 1) throw ConfigError("denoise_infer: need at least one future token");
    if (steps > n_future) {
        throw ConfigError("denoise_infer: " + std::to_string(steps) + " steps exceed " + std::to_string(n_future) +
                          " future tokens");
    }
    if (history.has_mask()) throw ConfigError("denoise_infer: history contains masks");
    history.validate(cfg.vocabulary);
    if (!allowed.empty()) {
        if (allowed.size() != cfg.vocabulary) {
            throw DimensionError("denoise_infer: vocabulary mask has " + std::to_string(allowed.size()) +
                                 " entries for K=" + std::to_string(cfg.vocabulary));
        }
        if (std::find(allowed.begin(), allowed.end(), true) == allowed.end()) {
            throw ConfigError("denoise_infer: vocabulary mask allows no token");
        }
    }

    const std::size_t n_hist = history.size();
    std::vector<int> ids = history.ids;
    ids.resize(n_hist + n_future, kMaskToken);
    const std::size_t per_round = n_future / steps;

    DenoiseResult result;
    for (std::size_t round = 0; round < steps; ++round) {
        Tape tape;
        Binder bind(tape, store);
        Var logits = predictor_forward(bind, cfg, tape.constant_ref(token_embeddings), ids);
        const Tensor probs = softmax_rows(logits.value());

        struct Candidate {
            std::size_t pos;
            int id;
            double confidence;
        };
        std::vector<Candidate> candidates;
        for (std::size_t p = 0; p < n_future; ++p) {
            if (ids[n_hist + p] != kMaskToken) continue;
            const double* row = &probs[(n_hist + p) * cfg.vocabulary];
            std::size_t best = cfg.vocabulary;
            for (std::size_t k = 0; k < cfg.vocabulary; ++k) {
                if (!allowed.empty() && !allowed[k]) continue;
                if (best == cfg.vocabulary || row[k] > row[best]) best = k;  // first maximum: lowest id
            }
            candidates.push_back({p, static_cast<int>(best), row[best]});
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.confidence > b.confidence; });
        const std::size_t take = round + 1 == steps ? candidates.size() : std::min(per_round, candidates.size());

        DenoiseRound record;
        record.round = round;
        for (std::size_t i = 0; i < take; ++i) {
            ids[n_hist + candidates[i].pos] = candidates[i].id;
            record.positions.push_back(candidates[i].pos);
            record.ids.push_back(candidates[i].id);
            record.confidences.push_back(candidates[i].confidence);
        }
        result.trace.rounds.push_back(std::move(record));
    }
    result.tokens = TokenSequence{std::vector<int>(ids.begin() + static_cast<std::ptrdiff_t>(n_hist), ids.end()),
                                  history.patch_len, history.wave_len};
    return result;
}

}  // namespace onecast::diffusion
