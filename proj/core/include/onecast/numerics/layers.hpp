#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>

#include "onecast/numerics/ops.hpp"
#include "onecast/numerics/parameter.hpp"
#include "onecast/numerics/tape.hpp"

namespace onecast::numerics {

/// Puts parameters from a store onto a tape, either as trainable leaves or as
/// borrowed constants. A read-only binder never touches the store, so any
/// number of them may share one frozen store across threads.
class Binder {
public:
    using Filter = std::function<bool(const std::string& id)>;

    /// Every parameter accepted by `trainable` becomes a gradient leaf.
    Binder(Tape& tape, ParameterStore& store, Filter trainable);
    /// Read-only: every parameter is a constant.
    Binder(Tape& tape, const ParameterStore& store);

    Var operator()(const std::string& id) const;
    Tape& tape() const { return *tape_; }
    const ParameterStore& store() const { return *store_; }

private:
    Tape* tape_;
    const ParameterStore* store_;
    ParameterStore* mutable_store_ = nullptr;
    Filter trainable_;
};

/// Creates `<prefix>.weight` (d_in x d_out) and `<prefix>.bias` (1 x d_out).
void init_linear(ParameterStore& store, const std::string& prefix, std::size_t d_in, std::size_t d_out,
                 std::mt19937_64& rng, double weight_scale = 1.0);
Var apply_linear(const Binder& bind, const std::string& prefix, Var x);

struct AttentionBlockConfig {
    std::size_t hidden = 128;
    std::size_t heads = 4;
    std::size_t ff = 512;
};

/// Pre-norm transformer block with full (bidirectional) attention:
///   h = x + Attn(LN1(x)),  y = h + W2 gelu(W1 LN2(h)).
void init_attention_block(ParameterStore& store, const std::string& prefix, const AttentionBlockConfig& cfg,
                          std::mt19937_64& rng);
/// `attention_out`, when given, receives the per-head attention matrices
/// stacked row-wise (heads * n) x n.
Var attention_block(const Binder& bind, const std::string& prefix, Var x, const AttentionBlockConfig& cfg,
                    Tensor* attention_out = nullptr);

/// Standard sinusoidal table: PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(...).
Tensor sinusoidal_positions(std::size_t n, std::size_t d);

}  // namespace onecast::numerics
