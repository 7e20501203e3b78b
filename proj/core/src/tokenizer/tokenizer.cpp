#include "onecast/tokenizer/tokenizer.hpp"

#include <limits>

#include "onecast/error.hpp"
#include "onecast/numerics/ops.hpp"

namespace onecast::tokenizer {

using namespace numerics;

namespace {

const char* role_name(DecoderRole role) { return role == DecoderRole::History ? "decoder_h" : "decoder_f"; }

std::string encoder_adapter(const std::string& domain) { return kTokenizerPrefix + ".encoder.adapter." + domain; }
std::string decoder_adapter(DecoderRole role, const std::string& domain) {
    return kTokenizerPrefix + "." + role_name(role) + ".adapter." + domain;
}

void init_conv_stack(ParameterStore& store, const std::string& prefix, const TokenizerConfig& cfg,
                     std::mt19937_64& rng) {
    const std::size_t h = cfg.hidden, k = cfg.kernel;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = prefix + ".block" + std::to_string(b);
        // Scaled down so the residual stack starts close to identity.
        Tensor w = init_glorot({h, h, k}, h * k, h * k, rng);
        for (auto& v : w.values()) v *= 0.5;
        store.create(p + ".weight", std::move(w));
        store.create(p + ".bias", Tensor({h}));
    }
}

// x: H x L, residual blocks x + gelu(conv(x)).
Var apply_conv_stack(const Binder& bind, const std::string& prefix, const TokenizerConfig& cfg, Var x) {
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = prefix + ".block" + std::to_string(b);
        Var y = conv1d(x, bind(p + ".weight"), bind(p + ".bias"), 1, (cfg.kernel - 1) / 2);
        x = add(x, gelu(y));
    }
    return x;
}

}  // namespace

void TokenizerConfig::validate() const {
    if (codebook_size < 2) throw ConfigError("tokenizer: codebook size K must be >= 2");
    if (code_dim < 1) throw ConfigError("tokenizer: code dimension D must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("tokenizer: beta must be positive");
    if (wave_len < 1 || patch_len < wave_len || patch_len % wave_len != 0) {
        throw ConfigError("tokenizer: patch length " + std::to_string(patch_len) +
                          " must be a positive multiple of wave length " + std::to_string(wave_len));
    }
    if (kernel % 2 == 0) throw ConfigError("tokenizer: conv kernel must be odd");
    if (hidden < 1 || blocks < 1) throw ConfigError("tokenizer: hidden width and block count must be >= 1");
}

std::size_t TokenizerConfig::tokens_for(std::size_t length) const {
    return (length + patch_len - 1) / patch_len * (patch_len / wave_len);
}

bool TokenSequence::has_mask() const {
    for (int id : ids)
        if (id == kMaskToken) return true;
    return false;
}

void TokenSequence::validate(std::size_t vocabulary) const {
    for (int id : ids) {
        if (id != kMaskToken && (id < 0 || static_cast<std::size_t>(id) >= vocabulary)) {
            throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(vocabulary));
        }
    }
}

Tensor Codebook::transformed() const { return matmul(vectors, transform); }

void init_tokenizer(ParameterStore& store, const TokenizerConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::size_t k = cfg.codebook_size, d = cfg.code_dim, h = cfg.hidden, w = cfg.wave_len;
    store.create(kCodebookVectors, init_uniform({k, d}, 1.0 / static_cast<double>(k), rng));
    Tensor m = init_normal({d, d}, 0.01, rng);
    for (std::size_t i = 0; i < d; ++i) m(i, i) += 1.0;
    store.create(kCodebookTransform, std::move(m));

    init_conv_stack(store, kTokenizerPrefix + ".encoder", cfg, rng);
    store.create(kTokenizerPrefix + ".encoder.patch.weight", init_glorot({d, h, w}, h * w, d, rng));
    store.create(kTokenizerPrefix + ".encoder.patch.bias", Tensor({d}));
    for (DecoderRole role : {DecoderRole::History, DecoderRole::Future}) {
        const std::string p = kTokenizerPrefix + "." + role_name(role);
        store.create(p + ".unpatch.weight", init_glorot({d, h, w}, d, h * w, rng));
        store.create(p + ".unpatch.bias", Tensor({h}));
        init_conv_stack(store, p, cfg, rng);
    }
}

void init_domain_adapters(ParameterStore& store, const TokenizerConfig& cfg, const std::string& domain,
                          std::size_t channels, std::mt19937_64& rng) {
    if (domain.empty() || domain.find_first_of(". \t\n") != std::string::npos) {
        throw ConfigError("domain id '" + domain + "' must be non-empty without dots or whitespace");
    }
    init_linear(store, encoder_adapter(domain), channels, cfg.hidden, rng);
    init_linear(store, decoder_adapter(DecoderRole::History, domain), cfg.hidden, channels, rng);
    init_linear(store, decoder_adapter(DecoderRole::Future, domain), cfg.hidden, channels, rng);
}

bool has_domain(const ParameterStore& store, const std::string& domain) {
    return store.contains(encoder_adapter(domain) + ".weight");
}

Codebook codebook(const ParameterStore& store, const TokenizerConfig& cfg) {
    return Codebook{store.at(kCodebookVectors).value, store.at(kCodebookTransform).value, cfg.beta};
}

Var encode(const Binder& bind, const TokenizerConfig& cfg, const std::string& domain, Var trend) {
    const std::size_t len = trend.rows();
    if (len % cfg.patch_len != 0) {
        throw DimensionError("encode: window length L = " + std::to_string(len) +
                             " is not divisible by patch length P = " + std::to_string(cfg.patch_len));
    }
    if (!bind.store().contains(encoder_adapter(domain) + ".weight")) {
        throw CheckpointError("encode: no adapters for domain '" + domain + "'");
    }
    Var h = apply_linear(bind, encoder_adapter(domain), trend);  // L x H
    Var x = apply_conv_stack(bind, kTokenizerPrefix + ".encoder", cfg, transpose(h));
    Var z = conv1d(x, bind(kTokenizerPrefix + ".encoder.patch.weight"), bind(kTokenizerPrefix + ".encoder.patch.bias"),
                   cfg.wave_len, 0);  // D x n
    return transpose(z);
}

Var transformed_codebook(const Binder& bind) { return matmul(bind(kCodebookVectors), bind(kCodebookTransform)); }

std::vector<int> nearest_codes(const Tensor& z, const Tensor& codes) {
    if (z.cols() != codes.cols()) {
        throw DimensionError("quantize: features " + shape_string(z.shape()) + " vs codebook " +
                             shape_string(codes.shape()));
    }
    const std::size_t n = z.rows(), k = codes.rows(), d = z.cols();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (std::size_t c = 0; c < k; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = z[i * d + j] - codes[c * d + j];
                dist += diff * diff;
            }
            if (dist < best) {  // strict: the first minimum wins
                best = dist;
                best_k = static_cast<int>(c);
            }
        }
        out[i] = best_k;
    }
    return out;
}

QuantizeVars quantize(Var z_e, Var codes, double beta, FrozenTrace* trace) {
    if (!z_e.value().all_finite()) throw NumericError("quantize: encoder features are not finite");
    std::vector<int> tokens = nearest_codes(z_e.value(), codes.value());
    if (trace) tokens = trace->choice(tokens);
    Var z_q = gather_rows(codes, tokens);

    auto detach = [&](Var v) { return trace ? trace->detach(v) : stop_gradient(v); };
    Var codebook_loss = add(mse(detach(z_e), z_q), scale(mse(z_e, detach(z_q)), beta));

    Var straight;
    if (trace && trace->replaying()) {
        // z_e + (recorded offset): the smooth surrogate of the straight-through path.
        Tensor offset = z_q.value();
        for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= z_e.value()[i];
        straight = add(z_e, z_e.tape->constant(trace->constant(offset)));
    } else {
        if (trace) {
            Tensor offset = z_q.value();
            for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= z_e.value()[i];
            trace->constant(offset);
        }
        straight = straight_through(z_e, z_q);
    }
    Var detached = detach(z_q);
    return QuantizeVars{std::move(tokens), straight, detached, codebook_loss};
}

QuantizeResult quantize(const Tensor& z_e, const Codebook& cb, const TokenizerConfig& cfg) {
    Tape tape;
    QuantizeVars q = quantize(tape.constant_ref(z_e), tape.constant(cb.transformed()), cb.beta);
    return QuantizeResult{TokenSequence{q.tokens, cfg.patch_len, cfg.wave_len}, z_e, q.straight.value(),
                          q.codebook_loss.value().item()};
}

Var decode(const Binder& bind, const TokenizerConfig& cfg, DecoderRole role, const std::string& domain, Var z,
           std::size_t length) {
    if (z.rows() * cfg.wave_len != length) {
        throw DimensionError("decode: " + std::to_string(z.rows()) + " tokens cannot produce " +
                             std::to_string(length) + " steps at wave length " + std::to_string(cfg.wave_len));
    }
    const std::string p = kTokenizerPrefix + "." + role_name(role);
    if (!bind.store().contains(decoder_adapter(role, domain) + ".weight")) {
        throw CheckpointError("decode: no adapters for domain '" + domain + "'");
    }
    Var x = conv_transpose1d(transpose(z), bind(p + ".unpatch.weight"), bind(p + ".unpatch.bias"), cfg.wave_len);
    x = apply_conv_stack(bind, p, cfg, x);  // H x L
    return apply_linear(bind, decoder_adapter(role, domain), transpose(x));
}

TokenSequence tokenize(const ParameterStore& store, const TokenizerConfig& cfg, const std::string& domain,
                       const Tensor& trend) {
    Tape tape;
    Binder bind(tape, store);
    Var z = encode(bind, cfg, domain, tape.constant_ref(trend));
    const Tensor codes = codebook(store, cfg).transformed();
    return TokenSequence{nearest_codes(z.value(), codes), cfg.patch_len, cfg.wave_len};
}

Tensor decode_tokens(const ParameterStore& store, const TokenizerConfig& cfg, DecoderRole role,
                     const std::string& domain, const TokenSequence& tokens, std::size_t length) {
    tokens.validate(cfg.codebook_size);
    if (tokens.has_mask()) throw VocabularyError("decode: token sequence still contains masks");
    Tape tape;
    Binder bind(tape, store);
    Var codes = tape.constant(codebook(store, cfg).transformed());
    Var z = gather_rows(codes, tokens.ids);
    return decode(bind, cfg, role, domain, z, length).value();
}

}  // namespace onecast::tokenizer
