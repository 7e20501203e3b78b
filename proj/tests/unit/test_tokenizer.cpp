#include <cmath>
#include <random>
#include <set>

#include "onecast/error.hpp"
#include "onecast/numerics/ops.hpp"
#include "onecast/tokenizer/tokenizer.hpp"
#include "support.hpp"

using namespace onecast;
using namespace onecast::tokenizer;
using numerics::Parameter;
using numerics::Tape;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

TokenizerConfig small_config() {
    TokenizerConfig c;
    c.codebook_size = 8;
    c.code_dim = 4;
    c.patch_len = 16;
    c.wave_len = 8;
    c.hidden = 6;
    return c;
}

ParameterStore make_store(const TokenizerConfig& cfg, std::uint64_t seed, std::size_t channels = 2) {
    std::mt19937_64 rng(seed);
    ParameterStore store;
    init_tokenizer(store, cfg, rng);
    init_domain_adapters(store, cfg, "d", channels, rng);
    return store;
}

}  // namespace

TEST_SUITE("layout") {
    TEST_CASE("96 steps at P=16, W=8 give 12 tokens") { CHECK(small_config().tokens_for(96) == 12); }

    TEST_CASE("token count is L / W whatever P") {
        for (std::size_t p : {8, 16, 32, 64}) {
            TokenizerConfig c = small_config();
            c.patch_len = p;
            CHECK(c.tokens_for(192) == 24);
        }
    }

    TEST_CASE("config validation") {
        TokenizerConfig c = small_config();
        c.codebook_size = 1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = small_config();
        c.patch_len = 12;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = small_config();
        c.beta = 0.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = small_config();
        c.kernel = 4;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }

    TEST_CASE("token ids are checked against the vocabulary") {
        TokenSequence s{{0, 3, kMaskToken}, 16, 8};
        CHECK(s.has_mask());
        CHECK_NOTHROW(s.validate(4));
        s.ids[1] = 4;
        CHECK_THROWS_AS(s.validate(4), VocabularyError);
        s.ids[1] = -2;
        CHECK_THROWS_AS(s.validate(4), VocabularyError);
    }
}

TEST_SUITE("init") {
    TEST_CASE("codebook ranges and near-identity transform") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 1);
        const Codebook cb = codebook(store, cfg);
        CHECK(cb.size() == 8);
        CHECK(cb.dim() == 4);
        for (double v : cb.vectors.values()) CHECK(std::abs(v) <= 1.0 / 8.0);
        CHECK(max_abs_diff(cb.transform, Tensor::identity(4)) < 0.06);
        CHECK(cb.transformed().all_finite());
    }

    TEST_CASE("domain ids and adapters") {
        const auto cfg = small_config();
        ParameterStore store = make_store(cfg, 2);
        std::mt19937_64 rng(2);
        CHECK(has_domain(store, "d"));
        CHECK_FALSE(has_domain(store, "e"));
        CHECK_THROWS_AS(init_domain_adapters(store, cfg, "a.b", 1, rng), ConfigError);
        CHECK_THROWS_AS(init_domain_adapters(store, cfg, "", 1, rng), ConfigError);
    }
}

TEST_SUITE("encode") {
    TEST_CASE("shape and channel independence of the token count") {
        const auto cfg = small_config();
        std::mt19937_64 rng(3);
        ParameterStore store;
        init_tokenizer(store, cfg, rng);
        init_domain_adapters(store, cfg, "one", 1, rng);
        init_domain_adapters(store, cfg, "seven", 7, rng);
        Tape t;
        Binder bind(t, store);
        const Var z1 = encode(bind, cfg, "one", t.constant(random_tensor({96, 1}, rng)));
        const Var z7 = encode(bind, cfg, "seven", t.constant(random_tensor({96, 7}, rng)));
        CHECK(z1.shape() == numerics::Shape{12, 4});
        CHECK(z7.shape() == numerics::Shape{12, 4});
    }

    TEST_CASE("length not divisible by P names both") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 4);
        Tape t;
        Binder bind(t, store);
        try {
            encode(bind, cfg, "d", t.constant(Tensor({40, 2})));
            FAIL("expected DimensionError");
        } catch (const DimensionError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("40") != std::string::npos);
            CHECK(msg.find("16") != std::string::npos);
        }
    }

    TEST_CASE("zero input with zero biases gives zero features") {
        const auto cfg = small_config();
        ParameterStore store = make_store(cfg, 5);
        for (auto& [id, p] : store) {
            if (id.size() > 5 && id.compare(id.size() - 5, 5, ".bias") == 0) p.value.fill(0.0);
        }
        Tape t;
        Binder bind(t, store);
        for (double v : encode(bind, cfg, "d", t.constant(Tensor({32, 2}))).value().values()) CHECK(v == 0.0);
    }

    TEST_CASE("unknown domain") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 6);
        Tape t;
        Binder bind(t, store);
        CHECK_THROWS_AS(encode(bind, cfg, "nope", t.constant(Tensor({32, 2}))), CheckpointError);
    }
}

TEST_SUITE("quantize") {
    TEST_CASE("exact match selects that code with zero loss") {
        std::mt19937_64 rng(7);
        const Tensor codes = random_tensor({5, 3}, rng);
        Tensor z({2, 3});
        for (std::size_t j = 0; j < 3; ++j) {
            z(0, j) = codes(3, j);
            z(1, j) = codes(1, j);
        }
        Tape t;
        const auto q = quantize(t.constant(z), t.constant(codes), 0.25);
        CHECK(q.tokens == std::vector<int>{3, 1});
        CHECK(q.codebook_loss.value().item() == 0.0);
    }

    TEST_CASE("ties go to the lower index") {
        const Tensor codes = Tensor::matrix({{1, 0}, {-1, 0}, {0, 1}, {1, 0}});
        CHECK(nearest_codes(Tensor::matrix({{0, 0}}), codes) == std::vector<int>{0});
        CHECK(nearest_codes(Tensor::matrix({{0, -1}}), codes) == std::vector<int>{0});
        CHECK(nearest_codes(Tensor::matrix({{2, 0}}), codes) == std::vector<int>{0});
        CHECK(nearest_codes(Tensor::matrix({{-0.5, 0.5}}), codes) == std::vector<int>{1});
    }

    TEST_CASE("brute force on K=4, D=2") {
        std::mt19937_64 rng(8);
        for (int trial = 0; trial < 200; ++trial) {
            const Tensor codes = random_tensor({4, 2}, rng), z = random_tensor({6, 2}, rng);
            const auto got = nearest_codes(z, codes);
            for (std::size_t i = 0; i < 6; ++i) {
                int best = 0;
                double bd = 1e300;
                for (int k = 0; k < 4; ++k) {
                    const double dx = z(i, 0) - codes(static_cast<std::size_t>(k), 0);
                    const double dy = z(i, 1) - codes(static_cast<std::size_t>(k), 1);
                    if (dx * dx + dy * dy < bd) {
                        bd = dx * dx + dy * dy;
                        best = k;
                    }
                }
                CHECK(got[i] == best);
            }
        }
    }

    TEST_CASE("z_q rows are codebook rows and the loss is (1 + beta) mse") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 9);
        std::mt19937_64 rng(9);
        const Tensor z = random_tensor({12, 4}, rng, 0.2);
        const Codebook cb = codebook(store, cfg);
        const auto r = quantize(z, cb, cfg);
        const Tensor e = cb.transformed();
        double se = 0.0;
        for (std::size_t i = 0; i < 12; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                const double code = e(static_cast<std::size_t>(r.tokens.ids[i]), j);
                CHECK(r.z_q(i, j) == code);
                se += (z(i, j) - code) * (z(i, j) - code);
            }
        }
        CHECK(r.codebook_loss == doctest::Approx(1.25 * se / 48.0).epsilon(1e-13));
        CHECK(r.tokens.size() == 12);
    }

    TEST_CASE("gradients: codebook term to the codes, commitment to z, straight-through to z") {
        std::mt19937_64 rng(10);
        Parameter z{"z", random_tensor({3, 2}, rng), {}};
        Parameter codes{"codes", random_tensor({4, 2}, rng), {}};
        const Tensor r = random_tensor({3, 2}, rng);
        z.zero_grad();
        codes.zero_grad();
        Tape t;
        const auto q = quantize(t.parameter(z), t.parameter(codes), 0.25);
        t.backward(numerics::sum(numerics::mul(q.straight, t.constant_ref(r))));
        // Downstream gradient passes to z_e unchanged and never reaches the codes.
        CHECK(z.grad == r);
        for (double g : codes.grad.values()) CHECK(g == 0.0);

        z.zero_grad();
        codes.zero_grad();
        Tape t2;
        const auto q2 = quantize(t2.parameter(z), t2.parameter(codes), 0.25);
        t2.backward(q2.codebook_loss);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto k = static_cast<std::size_t>(q2.tokens[i]);
            for (std::size_t j = 0; j < 2; ++j) {
                const double diff = z.value(i, j) - codes.value(k, j);
                CHECK(z.grad(i, j) == doctest::Approx(0.25 * 2.0 * diff / 6.0).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("straight-through identity against an identity quantizer") {
        const auto cfg = small_config();
        ParameterStore store = make_store(cfg, 11);
        std::mt19937_64 rng(11);
        const Tensor codes = codebook(store, cfg).transformed();
        Parameter z{"z", random_tensor({4, 4}, rng, 0.1), {}};
        Parameter zq{"zq", Tensor({4, 4}), {}};
        const Tensor target = random_tensor({32, 2}, rng);
        z.zero_grad();
        Tape t;
        Binder bind(t, store);
        const auto q = quantize(t.parameter(z), t.constant_ref(codes), 0.25);
        t.backward(numerics::mse(decode(bind, cfg, DecoderRole::History, "d", q.straight, 32), t.constant_ref(target)));

        // Same decoder fed z_q directly, as if quantization were the identity.
        zq.value = q.straight.value();
        zq.zero_grad();
        Tape t2;
        Binder bind2(t2, store);
        t2.backward(numerics::mse(decode(bind2, cfg, DecoderRole::History, "d", t2.parameter(zq), 32), t2.constant_ref(target)));
        CHECK(z.grad == zq.grad);
    }

    TEST_CASE("dimension mismatch and non-finite features") {
        Tape t;
        CHECK_THROWS_AS(quantize(t.constant(Tensor({2, 3})), t.constant(Tensor({4, 2})), 0.25), DimensionError);
        CHECK_THROWS_AS(quantize(t.constant(Tensor({1, 2}, {NAN, 0.0})), t.constant(Tensor({4, 2})), 0.25), NumericError);
    }
}

TEST_SUITE("decode") {
    TEST_CASE("untrained round trip is finite and shaped") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 12, 3);
        std::mt19937_64 rng(12);
        const Tensor x = random_tensor({48, 3}, rng);
        const TokenSequence tokens = tokenize(store, cfg, "d", x);
        CHECK(tokens.size() == 6);
        for (DecoderRole role : {DecoderRole::History, DecoderRole::Future}) {
            const Tensor y = decode_tokens(store, cfg, role, "d", tokens, 48);
            CHECK(y.shape() == numerics::Shape{48, 3});
            CHECK(y.all_finite());
        }
    }

    TEST_CASE("inconsistent token count and leftover masks") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 13);
        CHECK_THROWS_AS(decode_tokens(store, cfg, DecoderRole::History, "d", TokenSequence{{0, 1, 2}, 16, 8}, 32),
                        DimensionError);
        CHECK_THROWS_AS(decode_tokens(store, cfg, DecoderRole::Future, "d", TokenSequence{{0, kMaskToken}, 16, 8}, 16),
                        VocabularyError);
        CHECK_THROWS_AS(decode_tokens(store, cfg, DecoderRole::Future, "d", TokenSequence{{0, 8}, 16, 8}, 16),
                        VocabularyError);
    }

    TEST_CASE("history and future decoders are separate") {
        const auto cfg = small_config();
        const ParameterStore store = make_store(cfg, 14);
        const TokenSequence tokens{{1, 5, 2, 7}, 16, 8};
        CHECK_FALSE(decode_tokens(store, cfg, DecoderRole::History, "d", tokens, 32) ==
                    decode_tokens(store, cfg, DecoderRole::Future, "d", tokens, 32));
    }
}

TEST_SUITE("trend_tokenizer_loss") {
    TEST_CASE("plain sum") {
        CHECK(trend_tokenizer_loss(0, 0, 0) == 0.0);
        CHECK(trend_tokenizer_loss(1, 2, 3) == 6.0);
    }
}
