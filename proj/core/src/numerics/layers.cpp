#include "onecast/numerics/layers.hpp"

#include <cmath>

#include "onecast/error.hpp"

namespace onecast::numerics {

Binder::Binder(Tape& tape, ParameterStore& store, Filter trainable)
    : tape_(&tape), store_(&store), mutable_store_(&store), trainable_(std::move(trainable)) {}

Binder::Binder(Tape& tape, const ParameterStore& store) : tape_(&tape), store_(&store) {}

Var Binder::operator()(const std::string& id) const {
    if (mutable_store_ && trainable_ && trainable_(id)) return tape_->parameter(mutable_store_->at(id));
    return tape_->constant_ref(store_->at(id).value);
}

void init_linear(ParameterStore& store, const std::string& prefix, std::size_t d_in, std::size_t d_out,
                 std::mt19937_64& rng, double weight_scale) {
    Tensor w = init_glorot({d_in, d_out}, d_in, d_out, rng);
    for (auto& v : w.values()) v *= weight_scale;
    store.create(prefix + ".weight", std::move(w));
    store.create(prefix + ".bias", Tensor({1, d_out}));
}

Var apply_linear(const Binder& bind, const std::string& prefix, Var x) {
    return linear(x, bind(prefix + ".weight"), bind(prefix + ".bias"));
}

void init_attention_block(ParameterStore& store, const std::string& prefix, const AttentionBlockConfig& cfg,
                          std::mt19937_64& rng) {
    if (cfg.heads == 0 || cfg.hidden % cfg.heads != 0) {
        throw ConfigError("attention: hidden " + std::to_string(cfg.hidden) + " not divisible by heads " +
                          std::to_string(cfg.heads));
    }
    const std::size_t h = cfg.hidden;
    store.create(prefix + ".ln1.gamma", Tensor({1, h}, 1.0));
    store.create(prefix + ".ln1.beta", Tensor({1, h}));
    init_linear(store, prefix + ".q", h, h, rng);
    init_linear(store, prefix + ".k", h, h, rng);
    init_linear(store, prefix + ".v", h, h, rng);
    init_linear(store, prefix + ".o", h, h, rng);
    store.create(prefix + ".ln2.gamma", Tensor({1, h}, 1.0));
    store.create(prefix + ".ln2.beta", Tensor({1, h}));
    init_linear(store, prefix + ".ff1", h, cfg.ff, rng);
    init_linear(store, prefix + ".ff2", cfg.ff, h, rng);
}

Var attention_block(const Binder& bind, const std::string& prefix, Var x, const AttentionBlockConfig& cfg,
                    Tensor* attention_out) {
    if (x.value().rank() != 2 || x.rows() == 0 || x.cols() != cfg.hidden) {
        throw DimensionError("attention_block: input " + shape_string(x.shape()) + " vs hidden " +
                             std::to_string(cfg.hidden));
    }
    const std::size_t n = x.rows();
    const std::size_t head_dim = cfg.hidden / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Var a = layer_norm(x, bind(prefix + ".ln1.gamma"), bind(prefix + ".ln1.beta"));
    Var q = apply_linear(bind, prefix + ".q", a);
    Var k = apply_linear(bind, prefix + ".k", a);
    Var v = apply_linear(bind, prefix + ".v", a);

    if (attention_out) *attention_out = Tensor({cfg.heads * n, n});
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
        Var qh = slice_cols(q, hd * head_dim, head_dim);
        Var kh = slice_cols(k, hd * head_dim, head_dim);
        Var vh = slice_cols(v, hd * head_dim, head_dim);
        Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
        if (attention_out) {
            const Tensor& wv = weights.value();
            std::copy(wv.values().begin(), wv.values().end(), attention_out->values().begin() + hd * n * n);
        }
        heads.push_back(matmul(weights, vh));
    }
    Var attn = apply_linear(bind, prefix + ".o", concat_cols(heads));
    Var h = add(x, attn);

    Var b = layer_norm(h, bind(prefix + ".ln2.gamma"), bind(prefix + ".ln2.beta"));
    Var ff = apply_linear(bind, prefix + ".ff2", gelu(apply_linear(bind, prefix + ".ff1", b)));
    return add(h, ff);
}

Tensor sinusoidal_positions(std::size_t n, std::size_t d) {
    Tensor pe({n, d});
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe(p, i) = std::sin(static_cast<double>(p) * freq);
            if (i + 1 < d) pe(p, i + 1) = std::cos(static_cast<double>(p) * freq);
        }
    }
    return pe;
}

}  // namespace onecast::numerics
