#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "onecast/numerics/layers.hpp"
#include "onecast/numerics/tensor.hpp"

namespace onecast::seasonal {

using numerics::Tensor;
using numerics::Var;

/// Fixed bank of angular frequencies (radians per step), strictly ascending.
struct SeasonalBasis {
    std::vector<double> frequencies;
    double steps_per_day = 0.0;  // informational; 0 when unknown

    std::size_t size() const noexcept { return frequencies.size(); }
};

/// Per-channel weights of the sine and cosine terms, each N_s x C.
struct SeasonalWeights {
    Tensor sin_weights;
    Tensor cos_weights;
};

/// w_j = 2 pi / period_j, sorted ascending, duplicates removed.
SeasonalBasis build_basis(const std::vector<double>& periods_in_steps, double steps_per_day = 0.0);

/// Harmonics {P, P/2, P/3, P/4, P/6, P/8} of each natural period. Harmonics at
/// or below the Nyquist period (2 steps) are dropped: their sine column is
/// identically zero on integer time steps.
std::vector<double> harmonic_periods(const std::vector<double>& natural_periods);

/// T x 2N_s design matrix: column j is sin(w_j t), column N_s + j is cos(w_j t),
/// for absolute time t = t_start .. t_start + T - 1.
Tensor basis_matrix(const SeasonalBasis& basis, long t_start, std::size_t length);

/// X(t) = sum_j [v_s,j sin(w_j t) + v_c,j cos(w_j t)] per channel, T x C.
Tensor evaluate_basis(const SeasonalBasis& basis, const SeasonalWeights& weights, long t_start, std::size_t length);

/// Least-squares weights reproducing `series` (T x C) from the basis.
SeasonalWeights fit_weights(const SeasonalBasis& basis, const Tensor& series, long t_start);

/// Smallest eigenvalue of the Gram matrix B^T B of the basis sampled over
/// `length` steps from t = 0.
double gram_min_eigenvalue(const SeasonalBasis& basis, std::size_t length);

/// Stacks (sin; cos) into a 2N_s x C matrix and back.
Tensor stack_weights(const SeasonalWeights& w);
SeasonalWeights split_weights(const Tensor& stacked);

/// Shared channel-independent MLP mapping one channel's history (L_h values)
/// to 2N_s weights: Linear(L_h, hidden) -> GELU -> Linear(hidden, 2N_s).
struct SeasonalPredictorConfig {
    std::size_t history = 96;
    std::size_t hidden = 64;
    std::size_t basis_size = 1;
    bool zero_output_layer = true;
};

inline const std::string kSeasonalPrefix = "seasonal";

void init_seasonal_predictor(numerics::ParameterStore& store, const SeasonalPredictorConfig& cfg,
                             std::mt19937_64& rng);

/// history_season: L_h x C. Returns the stacked 2N_s x C weight matrix.
Var predict_weights(const numerics::Binder& bind, const SeasonalPredictorConfig& cfg, Var history_season);
SeasonalWeights predict_weights(const numerics::ParameterStore& store, const SeasonalPredictorConfig& cfg,
                                const Tensor& history_season);

}  // namespace onecast::seasonal
