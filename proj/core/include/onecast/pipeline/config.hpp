#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "onecast/diffusion/diffusion.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

namespace onecast::pipeline {

struct ModelConfig {
    std::size_t history = 96;  // L_h
    std::size_t horizon = 96;  // L_f
    std::size_t moving_average = 25;
    double epsilon = 1e-5;

    /// Natural periods in steps (e.g. day = 24 for hourly data). The basis is
    /// their harmonics unless `basis_periods` lists explicit periods.
    std::vector<double> natural_periods{24.0, 168.0};
    std::vector<double> basis_periods;
    std::size_t seasonal_hidden = 64;

    tokenizer::TokenizerConfig tokenizer;
    std::size_t predictor_hidden = 128;
    std::size_t predictor_layers = 2;
    std::size_t predictor_heads = 4;
    std::size_t predictor_ff_mult = 4;

    /// false trains the single-decoder ablation: the history decoder also
    /// decodes future tokens, with future statistics during training.
    bool dual_decoder = true;

    void validate() const;
    std::vector<double> resolved_basis_periods() const;
    diffusion::PredictorConfig predictor() const;
    std::size_t history_tokens() const { return tokenizer.tokens_for(history); }
    std::size_t future_tokens() const { return tokenizer.tokens_for(horizon); }
};

enum class Stage { Joint, Diffusion, Both };
Stage parse_stage(const std::string& name);
std::string to_string(Stage s);

struct TrainConfig {
    double lr = 5e-4;
    double weight_decay = 1e-5;
    double lr_decay_factor = 0.99;
    std::size_t lr_decay_every_steps = 300;
    std::size_t epochs = 25;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    std::size_t batch_size = 32;
    std::size_t window_stride = 1;
    Stage stage = Stage::Both;

    // Token predictor stage.
    double diffusion_lr = 1e-3;
    std::size_t diffusion_epochs = 100;
    diffusion::MaskScheduler scheduler = diffusion::MaskScheduler::Cosine;
    std::size_t inference_steps = 4;
    /// Tokens whose share of the Stage-I training tokens is below this are
    /// dropped from the predictor's vocabulary. 0 keeps every token.
    double abandon_threshold = 0.0;

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace onecast::pipeline
