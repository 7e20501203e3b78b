#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "onecast/numerics/tensor.hpp"

namespace onecast::decomposition {

using numerics::Tensor;

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr std::size_t kDefaultMovingAverage = 25;

/// A contiguous L x C slab of observations from one domain.
struct SeriesWindow {
    Tensor values;
    std::string domain_id;

    std::size_t length() const { return values.rows(); }
    std::size_t channels() const { return values.cols(); }
};

/// Per-channel window statistics. `sigma` is the population standard
/// deviation; the normalizer divides by sqrt(sigma^2 + epsilon).
struct NormStats {
    Tensor mu;     // 1 x C
    Tensor sigma;  // 1 x C
    double epsilon = kDefaultEpsilon;

    /// sqrt(sigma^2 + epsilon) per channel, 1 x C.
    Tensor scale() const;
    std::size_t channels() const { return mu.size(); }
};

struct DecomposedWindow {
    Tensor trend;
    Tensor season;
    NormStats stats;
};

/// (x - mu) / sqrt(sigma^2 + eps) per channel. Requires at least two rows.
std::pair<Tensor, NormStats> instance_normalize(const Tensor& values, double epsilon = kDefaultEpsilon);
std::pair<Tensor, NormStats> instance_normalize(const SeriesWindow& window, double epsilon = kDefaultEpsilon);

/// x * sqrt(sigma^2 + eps) + mu, the exact inverse of instance_normalize.
Tensor denormalize(const Tensor& x, const NormStats& stats);

/// Trailing moving average with the first row replicated in front:
/// trend_t = mean(x_{t-n+1..t}), season = x - trend. `stats` is left empty.
DecomposedWindow moving_average_decompose(const Tensor& x_norm, std::size_t window_n);

/// Normalize then split; the returned window carries the stats.
DecomposedWindow normalize_and_decompose(const Tensor& values, std::size_t window_n,
                                         double epsilon = kDefaultEpsilon);

/// Mean over points of |r| / (|t| + |s| + |r|); points with a zero
/// denominator contribute zero.
double residual_component_rate(const Tensor& trend, const Tensor& season, const Tensor& residual);

}  // namespace onecast::decomposition
