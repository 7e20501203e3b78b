#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onecast/data/dataset.hpp"
#include "onecast/data/metrics.hpp"
#include "onecast/diffusion/diffusion.hpp"
#include "onecast/pipeline/model.hpp"

namespace onecast::pipeline {

struct ForecastOptions {
    std::size_t steps = 4;
    /// Drop the trend branch (seasonal-only ablation).
    bool seasonal_only = false;
    /// Decode the tokens of this true future instead of denoising them
    /// (reconstruction diagnostics). Must be L_f x C.
    const Tensor* teacher_future = nullptr;
};

struct Forecast {
    Tensor values;  // L_f x C, original units
    Tensor trend;   // L_f x C, history-normalized
    Tensor season;  // L_f x C, history-normalized
    tokenizer::TokenSequence history_tokens;
    tokenizer::TokenSequence future_tokens;
    diffusion::DenoiseTrace trace;
};

/// Read-only on the model, so concurrent calls are safe.
Forecast forecast(const Model& model, const std::string& domain, const Tensor& history,
                  const ForecastOptions& options = {});

/// Repeat-last-value baseline, L_f x C.
Tensor repeat_last(const Tensor& history, std::size_t horizon);

struct EvalOptions {
    std::vector<std::size_t> horizons;  // empty: the model horizon
    std::size_t steps = 4;
    bool seasonal_only = false;
    /// Score the truth against itself (pipeline check; all errors zero).
    bool self_truth = false;
};

/// Metrics over `windows` for every horizon prefix. Adds token accuracy when a
/// predictor is present, plus reconstruction error and RCR diagnostics.
data::EvalReport evaluate(const Model& model, const std::string& domain, std::span<const data::WindowPair> windows,
                          const EvalOptions& options = {});

}  // namespace onecast::pipeline
