#include "onecast/decomposition/decomposition.hpp"

#include <cmath>

#include "onecast/error.hpp"

namespace onecast::decomposition {

Tensor NormStats::scale() const {
    Tensor s(mu.shape());
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = std::sqrt(sigma[c] * sigma[c] + epsilon);
    return s;
}

std::pair<Tensor, NormStats> instance_normalize(const Tensor& values, double epsilon) {
    if (values.rank() != 2) throw DimensionError("instance_normalize: expected L x C, got " + numerics::shape_string(values.shape()));
    const std::size_t len = values.rows(), ch = values.cols();
    if (len < 2) throw DataError("instance_normalize: window too short (L = " + std::to_string(len) + ", need >= 2)");
    if (!(epsilon > 0.0)) throw ConfigError("instance_normalize: epsilon must be positive");

    NormStats stats{Tensor({1, ch}), Tensor({1, ch}), epsilon};
    for (std::size_t c = 0; c < ch; ++c) {
        double mu = 0.0;
        for (std::size_t t = 0; t < len; ++t) mu += values(t, c);
        mu /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t t = 0; t < len; ++t) var += (values(t, c) - mu) * (values(t, c) - mu);
        var /= static_cast<double>(len);
        stats.mu[c] = mu;
        stats.sigma[c] = std::sqrt(var);
    }
    const Tensor scale = stats.scale();
    Tensor out(values.shape());
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < ch; ++c) out(t, c) = (values(t, c) - stats.mu[c]) / scale[c];
    return {std::move(out), std::move(stats)};
}

std::pair<Tensor, NormStats> instance_normalize(const SeriesWindow& window, double epsilon) {
    return instance_normalize(window.values, epsilon);
}

Tensor denormalize(const Tensor& x, const NormStats& stats) {
    if (x.rank() != 2 || x.cols() != stats.channels()) {
        throw DimensionError("denormalize: values " + numerics::shape_string(x.shape()) + " vs stats for " +
                             std::to_string(stats.channels()) + " channels");
    }
    const Tensor scale = stats.scale();
    Tensor out(x.shape());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t c = 0; c < x.cols(); ++c) out(t, c) = x(t, c) * scale[c] + stats.mu[c];
    return out;
}

DecomposedWindow moving_average_decompose(const Tensor& x_norm, std::size_t window_n) {
    if (window_n < 1) throw ConfigError("moving_average_decompose: window must be >= 1");
    if (x_norm.rank() != 2) throw DimensionError("moving_average_decompose: expected L x C");
    const std::size_t len = x_norm.rows(), ch = x_norm.cols();
    DecomposedWindow out{Tensor(x_norm.shape()), Tensor(x_norm.shape()), {}};
    const double inv_n = 1.0 / static_cast<double>(window_n);
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t t = 0; t < len; ++t) {
            double s = 0.0;
            for (std::size_t i = 0; i < window_n; ++i) {
                const std::size_t src = t >= i ? t - i : 0;  // replicate the first value
                s += x_norm(src, c);
            }
            out.trend(t, c) = s * inv_n;
            out.season(t, c) = x_norm(t, c) - out.trend(t, c);
        }
    }
    return out;
}

DecomposedWindow normalize_and_decompose(const Tensor& values, std::size_t window_n, double epsilon) {
    auto [norm, stats] = instance_normalize(values, epsilon);
    DecomposedWindow d = moving_average_decompose(norm, window_n);
    d.stats = std::move(stats);
    return d;
}

double residual_component_rate(const Tensor& trend, const Tensor& season, const Tensor& residual) {
    if (!trend.same_shape(season) || !trend.same_shape(residual)) {
        throw DimensionError("residual_component_rate: shapes " + numerics::shape_string(trend.shape()) + ", " +
                             numerics::shape_string(season.shape()) + ", " +
                             numerics::shape_string(residual.shape()));
    }
    if (trend.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < trend.size(); ++i) {
        const double r = std::abs(residual[i]);
        const double denom = std::abs(trend[i]) + std::abs(season[i]) + r;
        if (denom > 0.0) acc += r / denom;
    }
    return acc / static_cast<double>(trend.size());
}

}  // namespace onecast::decomposition
