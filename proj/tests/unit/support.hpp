#pragma once

#include <cmath>
#include <random>

#include <doctest.h>

#include "onecast/numerics/tensor.hpp"

namespace testing {

using onecast::numerics::Tensor;

inline Tensor random_tensor(onecast::numerics::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (double& v : t.values()) v = n(rng);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing
