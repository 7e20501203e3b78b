#include "onecast/pipeline/config.hpp"

#include "onecast/error.hpp"
#include "onecast/seasonal/seasonal.hpp"

namespace onecast::pipeline {

void ModelConfig::validate() const {
    tokenizer.validate();
    if (history < 2 || horizon < 1) throw ConfigError("history must be >= 2 and horizon >= 1");
    if (history % tokenizer.patch_len != 0 || horizon % tokenizer.patch_len != 0) {
        throw ConfigError("history (" + std::to_string(history) + ") and horizon (" + std::to_string(horizon) +
                          ") must be multiples of the patch length " + std::to_string(tokenizer.patch_len));
    }
    if (moving_average < 1) throw ConfigError("moving average window must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (seasonal_hidden < 1) throw ConfigError("seasonal hidden width must be >= 1");
    if (resolved_basis_periods().empty()) throw ConfigError("seasonal basis is empty");
    predictor().validate();
}

std::vector<double> ModelConfig::resolved_basis_periods() const {
    return basis_periods.empty() ? seasonal::harmonic_periods(natural_periods) : basis_periods;
}

diffusion::PredictorConfig ModelConfig::predictor() const {
    return {tokenizer.codebook_size, tokenizer.code_dim, predictor_hidden, predictor_layers, predictor_heads,
            predictor_ff_mult};
}

Stage parse_stage(const std::string& name) {
    if (name == "joint") return Stage::Joint;
    if (name == "diffusion") return Stage::Diffusion;
    if (name == "both") return Stage::Both;
    throw ConfigError("unknown stage '" + name + "' (expected joint, diffusion or both)");
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Joint: return "joint";
        case Stage::Diffusion: return "diffusion";
        case Stage::Both: return "both";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !(diffusion_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr decay factor must lie in (0, 1]");
    if (epochs < 1 || diffusion_epochs < 1) throw ConfigError("epochs must be >= 1");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (window_stride < 1) throw ConfigError("window stride must be >= 1");
    if (inference_steps < 1) throw ConfigError("inference steps must be >= 1");
    if (!(abandon_threshold >= 0.0 && abandon_threshold < 1.0)) {
        throw ConfigError("abandon threshold must lie in [0, 1)");
    }
}

nlohmann::json to_json(const ModelConfig& c) {
    const auto& t = c.tokenizer;
    return {{"history", c.history},
            {"horizon", c.horizon},
            {"moving_average", c.moving_average},
            {"epsilon", c.epsilon},
            {"natural_periods", c.natural_periods},
            {"basis_periods", c.basis_periods},
            {"seasonal_hidden", c.seasonal_hidden},
            {"tokenizer",
             {{"codebook_size", t.codebook_size},
              {"code_dim", t.code_dim},
              {"beta", t.beta},
              {"patch_len", t.patch_len},
              {"wave_len", t.wave_len},
              {"hidden", t.hidden},
              {"blocks", t.blocks},
              {"kernel", t.kernel}}},
            {"predictor_hidden", c.predictor_hidden},
            {"predictor_layers", c.predictor_layers},
            {"predictor_heads", c.predictor_heads},
            {"predictor_ff_mult", c.predictor_ff_mult},
            {"dual_decoder", c.dual_decoder}};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"lr_decay_factor", c.lr_decay_factor},
            {"lr_decay_every_steps", c.lr_decay_every_steps},
            {"epochs", c.epochs},
            {"gamma", c.gamma},
            {"seed", c.seed},
            {"batch_size", c.batch_size},
            {"window_stride", c.window_stride},
            {"stage", to_string(c.stage)},
            {"diffusion_lr", c.diffusion_lr},
            {"diffusion_epochs", c.diffusion_epochs},
            {"scheduler", diffusion::to_string(c.scheduler)},
            {"inference_steps", c.inference_steps},
            {"abandon_threshold", c.abandon_threshold}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.history = j.at("history").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.moving_average = j.at("moving_average").get<std::size_t>();
    c.epsilon = j.at("epsilon").get<double>();
    c.natural_periods = j.at("natural_periods").get<std::vector<double>>();
    c.basis_periods = j.at("basis_periods").get<std::vector<double>>();
    c.seasonal_hidden = j.at("seasonal_hidden").get<std::size_t>();
    const auto& t = j.at("tokenizer");
    c.tokenizer.codebook_size = t.at("codebook_size").get<std::size_t>();
    c.tokenizer.code_dim = t.at("code_dim").get<std::size_t>();
    c.tokenizer.beta = t.at("beta").get<double>();
    c.tokenizer.patch_len = t.at("patch_len").get<std::size_t>();
    c.tokenizer.wave_len = t.at("wave_len").get<std::size_t>();
    c.tokenizer.hidden = t.at("hidden").get<std::size_t>();
    c.tokenizer.blocks = t.at("blocks").get<std::size_t>();
    c.tokenizer.kernel = t.at("kernel").get<std::size_t>();
    c.predictor_hidden = j.at("predictor_hidden").get<std::size_t>();
    c.predictor_layers = j.at("predictor_layers").get<std::size_t>();
    c.predictor_heads = j.at("predictor_heads").get<std::size_t>();
    c.predictor_ff_mult = j.at("predictor_ff_mult").get<std::size_t>();
    c.dual_decoder = j.at("dual_decoder").get<bool>();
    return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
    c.lr_decay_every_steps = j.at("lr_decay_every_steps").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.gamma = j.at("gamma").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.window_stride = j.at("window_stride").get<std::size_t>();
    c.stage = parse_stage(j.at("stage").get<std::string>());
    c.diffusion_lr = j.at("diffusion_lr").get<double>();
    c.diffusion_epochs = j.at("diffusion_epochs").get<std::size_t>();
    c.scheduler = diffusion::parse_scheduler(j.at("scheduler").get<std::string>());
    c.inference_steps = j.at("inference_steps").get<std::size_t>();
    c.abandon_threshold = j.value("abandon_threshold", 0.0);
    return c;
}

}  // namespace onecast::pipeline
