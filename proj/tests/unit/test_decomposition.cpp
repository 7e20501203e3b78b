#include <cmath>
#include <random>

#include "onecast/decomposition/decomposition.hpp"
#include "onecast/error.hpp"
#include "support.hpp"

using namespace onecast;
using namespace onecast::decomposition;
using testing::max_abs_diff;
using testing::random_tensor;

TEST_SUITE("instance_normalize") {
    TEST_CASE("constant channel maps to zeros") {
        const auto [x, s] = instance_normalize(Tensor({4, 1}, {5, 5, 5, 5}), 1e-5);
        for (double v : x.values()) CHECK(v == 0.0);
        CHECK(s.mu[0] == 5.0);
        CHECK(s.sigma[0] == 0.0);
        CHECK(s.epsilon == 1e-5);
    }

    TEST_CASE("unit-variance pair is unchanged as epsilon vanishes") {
        const auto [x, s] = instance_normalize(Tensor({2, 1}, {-1, 1}), 1e-15);
        CHECK(x[0] == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.sigma[0] == 1.0);
    }

    TEST_CASE("per-channel mean is zero and round trip is exact") {
        std::mt19937_64 rng(1);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor w = random_tensor({96, 3}, rng, 4.0);
            for (std::size_t t = 0; t < 96; ++t) w(t, 1) += 100.0;
            const auto [x, s] = instance_normalize(w);
            for (std::size_t c = 0; c < 3; ++c) {
                double m = 0.0;
                for (std::size_t t = 0; t < 96; ++t) m += x(t, c);
                CHECK(std::abs(m / 96.0) < 1e-9);
            }
            CHECK(max_abs_diff(denormalize(x, s), w) < 1e-9);
        }
    }

    TEST_CASE("population standard deviation") {
        const auto [x, s] = instance_normalize(Tensor({4, 1}, {1, 2, 3, 4}), 1e-5);
        CHECK(s.mu[0] == 2.5);
        CHECK(s.sigma[0] == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
        CHECK(x[0] == doctest::Approx(-1.5 / std::sqrt(1.25 + 1e-5)).epsilon(1e-15));
    }

    TEST_CASE("short windows and bad epsilon") {
        CHECK_THROWS_AS(instance_normalize(Tensor({1, 2})), DataError);
        CHECK_THROWS_AS(instance_normalize(Tensor({3, 2}), 0.0), ConfigError);
    }

    TEST_CASE("SeriesWindow overload") {
        SeriesWindow w{Tensor({3, 1}, {1, 2, 3}), "d"};
        CHECK(w.length() == 3);
        CHECK(w.channels() == 1);
        CHECK(instance_normalize(w).first == instance_normalize(w.values).first);
    }
}

TEST_SUITE("denormalize") {
    TEST_CASE("zeros become the mean") {
        NormStats s{Tensor({1, 1}, {2.0}), Tensor({1, 1}, {3.0}), 1e-5};
        const Tensor y = denormalize(Tensor({5, 1}), s);
        for (double v : y.values()) CHECK(v == 2.0);
    }

    TEST_CASE("identity statistics") {
        std::mt19937_64 rng(2);
        const Tensor x = random_tensor({8, 2}, rng);
        // sigma^2 + eps == 1 exactly: sigma = 0.75, eps = 0.4375.
        NormStats s{Tensor({1, 2}), Tensor({1, 2}, 0.75), 0.4375};
        CHECK(denormalize(x, s) == x);
    }

    TEST_CASE("channel mismatch") {
        NormStats s{Tensor({1, 2}), Tensor({1, 2}, 1.0), 1e-5};
        CHECK_THROWS_AS(denormalize(Tensor({4, 3}), s), DimensionError);
    }
}

TEST_SUITE("moving_average_decompose") {
    TEST_CASE("unit window") {
        std::mt19937_64 rng(3);
        const Tensor x = random_tensor({10, 2}, rng);
        const auto d = moving_average_decompose(x, 1);
        CHECK(d.trend == x);
        for (double v : d.season.values()) CHECK(v == 0.0);
    }

    TEST_CASE("constant series") {
        for (std::size_t n : {1, 2, 5, 25, 40}) {
            const auto d = moving_average_decompose(Tensor({20, 1}, 0.7), n);
            for (double v : d.trend.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
            for (double v : d.season.values()) CHECK(std::abs(v) < 1e-15);
        }
    }

    TEST_CASE("hand example with replicated front padding") {
        const auto d = moving_average_decompose(Tensor({4, 1}, {1, 2, 3, 4}), 2);
        CHECK(d.trend == Tensor({4, 1}, {1, 1.5, 2.5, 3.5}));
        CHECK(d.season == Tensor({4, 1}, {0, 0.5, 0.5, 0.5}));
    }

    TEST_CASE("partition is exact") {
        std::mt19937_64 rng(4);
        const Tensor x = random_tensor({96, 4}, rng);
        const auto d = moving_average_decompose(x, 25);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(d.trend[i] + d.season[i] == doctest::Approx(x[i]).epsilon(1e-15));
        CHECK(max_abs_diff([&] {
                  Tensor s = d.trend;
                  s.add_inplace(d.season);
                  return s;
              }(),
                           x) < 1e-12);
    }

    TEST_CASE("trend is a trailing mean (reference loop)") {
        std::mt19937_64 rng(5);
        const Tensor x = random_tensor({30, 2}, rng);
        const std::size_t n = 7;
        const auto d = moving_average_decompose(x, n);
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t t = 0; t < 30; ++t) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += x(t >= i ? t - i : 0, c);
                CHECK(d.trend(t, c) == doctest::Approx(acc / n).epsilon(1e-13));
            }
        }
    }

    TEST_CASE("shift equivariance away from the padded prefix") {
        std::mt19937_64 rng(6);
        const Tensor x = random_tensor({60, 1}, rng);
        const std::size_t n = 5, k = 9;
        Tensor shifted({60, 1});
        for (std::size_t t = k; t < 60; ++t) shifted(t, 0) = x(t - k, 0);
        const auto a = moving_average_decompose(x, n);
        const auto b = moving_average_decompose(shifted, n);
        for (std::size_t t = n + k; t < 60; ++t) CHECK(b.trend(t, 0) == doctest::Approx(a.trend(t - k, 0)).epsilon(1e-13));
    }

    TEST_CASE("window must be positive") { CHECK_THROWS_AS(moving_average_decompose(Tensor({4, 1}), 0), ConfigError); }

    TEST_CASE("normalize_and_decompose keeps the stats") {
        std::mt19937_64 rng(7);
        const Tensor x = random_tensor({40, 2}, rng, 3.0);
        const auto d = normalize_and_decompose(x, 5);
        const auto [norm, stats] = instance_normalize(x);
        CHECK(d.stats.mu == stats.mu);
        CHECK(d.stats.sigma == stats.sigma);
        Tensor sum = d.trend;
        sum.add_inplace(d.season);
        CHECK(max_abs_diff(sum, norm) < 1e-12);
    }
}

TEST_SUITE("residual_component_rate") {
    TEST_CASE("zero residual") {
        std::mt19937_64 rng(8);
        CHECK(residual_component_rate(random_tensor({5, 2}, rng), random_tensor({5, 2}, rng), Tensor({5, 2})) == 0.0);
    }

    TEST_CASE("residual only") {
        std::mt19937_64 rng(9);
        Tensor r = random_tensor({5, 2}, rng);
        for (double& v : r.values()) v += v >= 0 ? 0.1 : -0.1;
        CHECK(residual_component_rate(Tensor({5, 2}), Tensor({5, 2}), r) == 1.0);
    }

    TEST_CASE("single point 3,1,1") {
        CHECK(residual_component_rate(Tensor({1, 1}, {3.0}), Tensor({1, 1}, {1.0}), Tensor({1, 1}, {-1.0})) ==
              doctest::Approx(0.2).epsilon(1e-15));
    }

    TEST_CASE("zero denominators contribute zero") {
        CHECK(residual_component_rate(Tensor({2, 1}), Tensor({2, 1}), Tensor({2, 1}, {0.0, 2.0})) == 0.5);
    }

    TEST_CASE("shape mismatch") {
        CHECK_THROWS_AS(residual_component_rate(Tensor({2, 1}), Tensor({2, 2}), Tensor({2, 1})), DimensionError);
    }
}
