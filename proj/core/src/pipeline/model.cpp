#include "onecast/pipeline/model.hpp"

#include <limits>
#include <random>

#include "onecast/error.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

namespace onecast::pipeline {

std::size_t Model::channels(const std::string& domain) const {
    auto it = domains.find(domain);
    if (it == domains.end()) throw CheckpointError("model has no domain '" + domain + "'");
    return it->second;
}

seasonal::SeasonalPredictorConfig Model::seasonal_config() const {
    return {config.history, config.seasonal_hidden, basis.size(), true};
}

Tensor Model::token_embeddings() const { return tokenizer::codebook(params, config.tokenizer).transformed(); }

std::vector<bool> Model::vocabulary_mask() const {
    if (abandoned_tokens.empty()) return {};
    std::vector<bool> mask(config.tokenizer.codebook_size, true);
    for (int id : abandoned_tokens) mask.at(static_cast<std::size_t>(id)) = false;
    return mask;
}

std::vector<int> Model::remap_abandoned(std::vector<int> ids) const {
    if (abandoned_tokens.empty()) return ids;
    const std::vector<bool> mask = vocabulary_mask();
    const Tensor codes = token_embeddings();
    const std::size_t d = codes.cols();
    for (int& id : ids) {
        if (id < 0 || mask[static_cast<std::size_t>(id)]) continue;
        const auto from = static_cast<std::size_t>(id);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < mask.size(); ++k) {
            if (!mask[k]) continue;
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = codes(from, j) - codes(k, j);
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                id = static_cast<int>(k);
            }
        }
    }
    return ids;
}

Model create_model(const ModelConfig& config, const TrainConfig& train,
                   const std::map<std::string, std::size_t>& domains) {
    config.validate();
    train.validate();
    if (domains.empty()) throw DataError("at least one domain is required");

    Model m;
    m.config = config;
    m.train = train;
    m.basis = seasonal::build_basis(config.resolved_basis_periods());
    m.domains = domains;

    std::mt19937_64 tok_rng(numerics::derive_seed(train.seed, "tokenizer"));
    tokenizer::init_tokenizer(m.params, config.tokenizer, tok_rng);
    for (const auto& [id, channels] : domains) {
        if (channels == 0) throw DataError("domain '" + id + "' has no channels");
        std::mt19937_64 rng(numerics::derive_seed(train.seed, "adapter." + id));
        tokenizer::init_domain_adapters(m.params, config.tokenizer, id, channels, rng);
    }
    std::mt19937_64 season_rng(numerics::derive_seed(train.seed, "seasonal"));
    seasonal::init_seasonal_predictor(m.params, m.seasonal_config(), season_rng);
    return m;
}

}  // namespace onecast::pipeline
