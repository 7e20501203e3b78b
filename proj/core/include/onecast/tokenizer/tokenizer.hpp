#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "onecast/numerics/frozen_trace.hpp"
#include "onecast/numerics/layers.hpp"
#include "onecast/numerics/tensor.hpp"

namespace onecast::tokenizer {

using numerics::Binder;
using numerics::ParameterStore;
using numerics::Tensor;
using numerics::Var;

inline constexpr int kMaskToken = -1;

struct TokenizerConfig {
    std::size_t codebook_size = 128;  // K
    std::size_t code_dim = 64;        // D
    double beta = 0.25;
    std::size_t patch_len = 16;  // P
    std::size_t wave_len = 8;    // W; one token per W steps
    std::size_t hidden = 64;     // conv stack width
    std::size_t blocks = 3;
    std::size_t kernel = 3;

    void validate() const;
    /// Tokens per window of `length` steps: ceil(L/P) * (P/W).
    std::size_t tokens_for(std::size_t length) const;
};

/// Token ids in [0, K) or kMaskToken, with the patch layout they came from.
struct TokenSequence {
    std::vector<int> ids;
    std::size_t patch_len = 16;
    std::size_t wave_len = 8;

    std::size_t size() const noexcept { return ids.size(); }
    bool has_mask() const;
    /// Throws VocabularyError for ids outside [0, K) other than the mask.
    void validate(std::size_t vocabulary) const;
};

/// Snapshot of the learnable vocabulary E (K x D), its transform M (D x D)
/// and the transformed vocabulary E*M actually matched against.
struct Codebook {
    Tensor vectors;
    Tensor transform;
    double beta = 0.25;

    std::size_t size() const { return vectors.rows(); }
    std::size_t dim() const { return vectors.cols(); }
    Tensor transformed() const;
};

struct QuantizeResult {
    TokenSequence tokens;
    Tensor z_e;
    Tensor z_q;
    double codebook_loss = 0.0;
};

enum class DecoderRole { History, Future };

inline const std::string kTokenizerPrefix = "tokenizer";
inline const std::string kCodebookVectors = "tokenizer.codebook.vectors";
inline const std::string kCodebookTransform = "tokenizer.codebook.transform";

/// Shared parameters: codebook, conv stacks, patch/unpatch layers.
void init_tokenizer(ParameterStore& store, const TokenizerConfig& cfg, std::mt19937_64& rng);
/// Per-domain input and output adapters for a domain with `channels` columns.
void init_domain_adapters(ParameterStore& store, const TokenizerConfig& cfg, const std::string& domain,
                          std::size_t channels, std::mt19937_64& rng);
bool has_domain(const ParameterStore& store, const std::string& domain);

Codebook codebook(const ParameterStore& store, const TokenizerConfig& cfg);

/// trend: L x C  ->  z_e: n x D with n = L / W.
Var encode(const Binder& bind, const TokenizerConfig& cfg, const std::string& domain, Var trend);

/// E * M on the tape.
Var transformed_codebook(const Binder& bind);

/// Nearest transformed code per row; ties resolve to the smallest index.
std::vector<int> nearest_codes(const Tensor& z, const Tensor& codes);

struct QuantizeVars {
    std::vector<int> tokens;
    Var straight;       // value E_hat[tokens], gradient routed to z_e
    Var detached;       // value E_hat[tokens], no gradient
    Var codebook_loss;  // mse(sg z, e) + beta * mse(z, sg e)
};

/// `trace` (optional) freezes token choices and stop-gradient values so
/// the straight-through path can be checked against finite differences.
QuantizeVars quantize(Var z_e, Var codes, double beta, numerics::FrozenTrace* trace = nullptr);
QuantizeResult quantize(const Tensor& z_e, const Codebook& cb, const TokenizerConfig& cfg);

/// z: n x D  ->  (n W) x C.
Var decode(const Binder& bind, const TokenizerConfig& cfg, DecoderRole role, const std::string& domain, Var z,
           std::size_t length);

/// Frozen-parameter helpers.
TokenSequence tokenize(const ParameterStore& store, const TokenizerConfig& cfg, const std::string& domain,
                       const Tensor& trend);
Tensor decode_tokens(const ParameterStore& store, const TokenizerConfig& cfg, DecoderRole role,
                     const std::string& domain, const TokenSequence& tokens, std::size_t length);

/// L_trend = L1 + L2 + L_codebook.
inline double trend_tokenizer_loss(double l1, double l2, double codebook_loss) { return l1 + l2 + codebook_loss; }

}  // namespace onecast::tokenizer
