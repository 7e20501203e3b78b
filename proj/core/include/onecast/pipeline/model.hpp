#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "onecast/diffusion/diffusion.hpp"
#include "onecast/numerics/parameter.hpp"
#include "onecast/pipeline/config.hpp"
#include "onecast/seasonal/seasonal.hpp"

namespace onecast::pipeline {

using numerics::ParameterStore;
using numerics::Tensor;

/// Everything a forecast needs: configs, basis bank, domain channel counts
/// and the parameter store (tokenizer, seasonal MLP, optional predictor).
struct Model {
    ModelConfig config;
    TrainConfig train;
    seasonal::SeasonalBasis basis;
    std::map<std::string, std::size_t> domains;  // id -> channels
    ParameterStore params;
    bool joint_trained = false;
    bool diffusion_trained = false;
    nlohmann::json metadata = nlohmann::json::object();
    /// Token ids dropped from the predictor's vocabulary, ascending.
    std::vector<int> abandoned_tokens;

    std::size_t channels(const std::string& domain) const;
    seasonal::SeasonalPredictorConfig seasonal_config() const;
    /// Frozen transformed vocabulary E*M, K x D.
    Tensor token_embeddings() const;
    /// One flag per token id, false for abandoned ids; empty when none are.
    std::vector<bool> vocabulary_mask() const;
    /// Replaces every abandoned id by the nearest kept code of E*M.
    std::vector<int> remap_abandoned(std::vector<int> ids) const;
};

/// Fresh model: tokenizer, adapters for every domain and the seasonal MLP.
/// The token predictor is created by the diffusion trainer.
Model create_model(const ModelConfig& config, const TrainConfig& train,
                   const std::map<std::string, std::size_t>& domains);

inline bool is_stage2_parameter(const std::string& id) {
    return numerics::has_prefix(id, diffusion::kPredictorPrefix + ".");
}
inline bool is_stage1_parameter(const std::string& id) { return !is_stage2_parameter(id); }

}  // namespace onecast::pipeline
