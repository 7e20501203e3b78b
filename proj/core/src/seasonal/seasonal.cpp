#include "onecast/seasonal/seasonal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "onecast/error.hpp"
#include "onecast/numerics/ops.hpp"

namespace onecast::seasonal {

SeasonalBasis build_basis(const std::vector<double>& periods_in_steps, double steps_per_day) {
    if (periods_in_steps.empty()) throw ConfigError("build_basis: no periods given");
    SeasonalBasis basis;
    basis.steps_per_day = steps_per_day;
    for (double p : periods_in_steps) {
        if (!(p > 1.0) || !std::isfinite(p)) {
            throw ConfigError("build_basis: period " + std::to_string(p) + " must be > 1 step");
        }
        basis.frequencies.push_back(2.0 * std::numbers::pi / p);
    }
    std::sort(basis.frequencies.begin(), basis.frequencies.end());
    basis.frequencies.erase(std::unique(basis.frequencies.begin(), basis.frequencies.end()),
                            basis.frequencies.end());
    return basis;
}

std::vector<double> harmonic_periods(const std::vector<double>& natural_periods) {
    static constexpr double kDivisors[] = {1, 2, 3, 4, 6, 8};
    std::vector<double> out;
    for (double p : natural_periods)
        for (double d : kDivisors)
            if (p / d > 2.0) out.push_back(p / d);
    return out;
}

Tensor basis_matrix(const SeasonalBasis& basis, long t_start, std::size_t length) {
    const std::size_t n = basis.size();
    Tensor b({length, 2 * n});
    for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(t_start + static_cast<long>(i));
        for (std::size_t j = 0; j < n; ++j) {
            b(i, j) = std::sin(basis.frequencies[j] * t);
            b(i, n + j) = std::cos(basis.frequencies[j] * t);
        }
    }
    return b;
}

Tensor stack_weights(const SeasonalWeights& w) {
    const std::size_t n = w.sin_weights.rows(), c = w.sin_weights.cols();
    if (!w.sin_weights.same_shape(w.cos_weights)) throw DimensionError("seasonal weights: sin/cos shape mismatch");
    Tensor out({2 * n, c});
    std::copy(w.sin_weights.values().begin(), w.sin_weights.values().end(), out.values().begin());
    std::copy(w.cos_weights.values().begin(), w.cos_weights.values().end(), out.values().begin() + n * c);
    return out;
}

SeasonalWeights split_weights(const Tensor& stacked) {
    const std::size_t n = stacked.rows() / 2, c = stacked.cols();
    SeasonalWeights w{Tensor({n, c}), Tensor({n, c})};
    std::copy_n(stacked.values().begin(), n * c, w.sin_weights.values().begin());
    std::copy_n(stacked.values().begin() + n * c, n * c, w.cos_weights.values().begin());
    return w;
}

Tensor evaluate_basis(const SeasonalBasis& basis, const SeasonalWeights& weights, long t_start, std::size_t length) {
    if (length < 1) throw ConfigError("evaluate_basis: length must be >= 1");
    if (weights.sin_weights.rows() != basis.size()) {
        throw DimensionError("evaluate_basis: " + std::to_string(weights.sin_weights.rows()) + " weight rows for " +
                             std::to_string(basis.size()) + " basis functions");
    }
    return numerics::matmul(basis_matrix(basis, t_start, length), stack_weights(weights));
}

SeasonalWeights fit_weights(const SeasonalBasis& basis, const Tensor& series, long t_start) {
    const Tensor b = basis_matrix(basis, t_start, series.rows());
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> bm(
        b.values().data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
        series.values().data(), static_cast<Eigen::Index>(series.rows()), static_cast<Eigen::Index>(series.cols()));
    const Eigen::MatrixXd coeffs = bm.colPivHouseholderQr().solve(Eigen::MatrixXd(ym));
    Tensor stacked({b.cols(), series.cols()});
    for (std::size_t i = 0; i < stacked.rows(); ++i)
        for (std::size_t j = 0; j < stacked.cols(); ++j)
            stacked(i, j) = coeffs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return split_weights(stacked);
}

double gram_min_eigenvalue(const SeasonalBasis& basis, std::size_t length) {
    const Tensor b = basis_matrix(basis, 0, length);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> bm(
        b.values().data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    const Eigen::MatrixXd gram = bm.transpose() * bm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

void init_seasonal_predictor(numerics::ParameterStore& store, const SeasonalPredictorConfig& cfg,
                             std::mt19937_64& rng) {
    numerics::init_linear(store, kSeasonalPrefix + ".mlp1", cfg.history, cfg.hidden, rng);
    numerics::init_linear(store, kSeasonalPrefix + ".mlp2", cfg.hidden, 2 * cfg.basis_size, rng,
                          cfg.zero_output_layer ? 0.0 : 1.0);
}

Var predict_weights(const numerics::Binder& bind, const SeasonalPredictorConfig& cfg, Var history_season) {
    if (history_season.rows() != cfg.history) {
        throw DimensionError("predict_weights: history length " + std::to_string(history_season.rows()) +
                             " vs configured " + std::to_string(cfg.history));
    }
    using namespace numerics;
    Var per_channel = transpose(history_season);  // C x L_h
    Var hidden = gelu(apply_linear(bind, kSeasonalPrefix + ".mlp1", per_channel));
    Var out = apply_linear(bind, kSeasonalPrefix + ".mlp2", hidden);  // C x 2N_s
    return transpose(out);
}

SeasonalWeights predict_weights(const numerics::ParameterStore& store, const SeasonalPredictorConfig& cfg,
                                const Tensor& history_season) {
    numerics::Tape tape;
    numerics::Binder bind(tape, store);
    Var w = predict_weights(bind, cfg, tape.constant_ref(history_season));
    return split_weights(w.value());
}

}  // namespace onecast::seasonal
