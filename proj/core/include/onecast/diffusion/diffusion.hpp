#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "onecast/numerics/layers.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

namespace onecast::diffusion {

using numerics::Binder;
using numerics::ParameterStore;
using numerics::Tensor;
using numerics::Var;
using tokenizer::kMaskToken;
using tokenizer::TokenSequence;

// Mask schedulers p(t), t in [0, 1]:
//   cosine  cos(t pi / 2)       linear  1 - t
//   power   1 - t^2             sigmoid (s(t) - s(0)) / (s(1) - s(0)), s logistic
// The first three fall from 1 to 0; sigmoid rises from 0 to 1. Training draws
// t uniformly, so each covers the full masking range either way.
enum class MaskScheduler { Cosine, Linear, Power, Sigmoid };

double mask_probability(MaskScheduler s, double t);
std::string to_string(MaskScheduler s);
MaskScheduler parse_scheduler(const std::string& name);
inline constexpr MaskScheduler kAllSchedulers[] = {MaskScheduler::Cosine, MaskScheduler::Linear,
                                                   MaskScheduler::Power, MaskScheduler::Sigmoid};

/// Independently replaces each token with the mask with probability p_mask.
/// Draws exactly one uniform per position.
TokenSequence corrupt(const TokenSequence& future, double p_mask, std::mt19937_64& rng);

/// Probability that a non-mask token is still itself after `step` steps of
/// the absorbing-state chain: prod_{i < step} (1 - beta_i).
double absorbing_marginal(std::span<const double> betas, std::size_t step);

struct PredictorConfig {
    std::size_t vocabulary = 128;  // K
    std::size_t code_dim = 64;     // D, width of the token embeddings
    std::size_t hidden = 128;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ff_mult = 4;

    void validate() const;
    numerics::AttentionBlockConfig block() const { return {hidden, heads, ff_mult * hidden}; }
};

inline const std::string kPredictorPrefix = "predictor";
inline const std::string kMaskEmbedding = "predictor.mask_embedding";

/// Transformer weights plus a mask embedding set to the mean of `token_embeddings` (K x D).
void init_predictor(ParameterStore& store, const PredictorConfig& cfg, const Tensor& token_embeddings,
                    std::mt19937_64& rng);
bool has_predictor(const ParameterStore& store);

/// ids (tokens or mask) -> N x K logits. `token_embeddings` is the frozen
/// transformed vocabulary.
Var predictor_forward(const Binder& bind, const PredictorConfig& cfg, Var token_embeddings, std::span<const int> ids);

/// Masked-average cross entropy; only positions with masked[i] count.
/// Throws DegenerateBatchError when nothing is masked.
Var diffusion_loss(Var logits, std::span<const int> targets, const std::vector<bool>& masked);

struct DenoiseRound {
    std::size_t round = 0;
    std::vector<std::size_t> positions;  // offsets into the future segment
    std::vector<int> ids;
    std::vector<double> confidences;
};

struct DenoiseTrace {
    std::vector<DenoiseRound> rounds;

    /// One JSON object per round.
    void write_jsonl(std::ostream& os) const;
};

struct DenoiseResult {
    TokenSequence tokens;
    DenoiseTrace trace;
};

/// Starts from an all-mask future and, for `steps` rounds, restores the
/// floor(n_future / steps) masked positions with the highest max-probability
/// (ties: lower position, then lower id). The last round restores whatever is
/// left. Restored positions are never revisited. A non-empty `allowed` (one
/// flag per vocabulary id) restricts the argmax to the flagged ids.
DenoiseResult denoise_infer(const ParameterStore& store, const PredictorConfig& cfg, const Tensor& token_embeddings,
                            const TokenSequence& history, std::size_t n_future, std::size_t steps,
                            const std::vector<bool>& allowed = {});

}  // namespace onecast::diffusion
