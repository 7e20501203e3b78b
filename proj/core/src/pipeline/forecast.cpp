#include "onecast/pipeline/forecast.hpp"

#include <algorithm>

#include "onecast/decomposition/decomposition.hpp"
#include "onecast/error.hpp"
#include "onecast/pipeline/training.hpp"
#include "onecast/seasonal/seasonal.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

namespace onecast::pipeline {

using numerics::shape_string;

namespace {

Tensor head_rows(const Tensor& t, std::size_t rows) {
    const std::size_t c = t.cols();
    return Tensor({rows, c}, std::vector<double>(t.storage().begin(), t.storage().begin() + rows * c));
}

}  // namespace

Forecast forecast(const Model& model, const std::string& domain, const Tensor& history,
                  const ForecastOptions& options) {
    const ModelConfig& cfg = model.config;
    const std::size_t channels = model.channels(domain);
    if (!model.joint_trained) throw CheckpointError("forecast: model has no trained tokenizer or seasonal predictor");
    if (history.rows() != cfg.history || history.cols() != channels) {
        throw DimensionError("forecast: history " + shape_string(history.shape()) + " does not match L_h=" +
                             std::to_string(cfg.history) + ", C=" + std::to_string(channels));
    }
    if (!history.all_finite()) throw DataError("forecast: history contains non-finite values");

    const auto dh = decomposition::normalize_and_decompose(history, cfg.moving_average, cfg.epsilon);
    Forecast f;
    const auto weights = seasonal::predict_weights(model.params, model.seasonal_config(), dh.season);
    f.season = seasonal::evaluate_basis(model.basis, weights, static_cast<long>(cfg.history), cfg.horizon);

    if (options.seasonal_only) {
        f.trend = Tensor({cfg.horizon, channels});
    } else {
        f.history_tokens = tokenizer::tokenize(model.params, cfg.tokenizer, domain, dh.trend);
        if (options.teacher_future) {
            const Tensor& truth = *options.teacher_future;
            if (truth.rows() != cfg.horizon || truth.cols() != channels) {
                throw DimensionError("forecast: teacher future " + shape_string(truth.shape()) + " is not L_f x C");
            }
            const auto df = decomposition::normalize_and_decompose(truth, cfg.moving_average, cfg.epsilon);
            f.future_tokens = tokenizer::tokenize(model.params, cfg.tokenizer, domain, df.trend);
        } else {
            if (!model.diffusion_trained || !diffusion::has_predictor(model.params)) {
                throw CheckpointError("forecast: model has no trained token predictor");
            }
            tokenizer::TokenSequence visible = f.history_tokens;
            visible.ids = model.remap_abandoned(std::move(visible.ids));
            auto res = diffusion::denoise_infer(model.params, cfg.predictor(), model.token_embeddings(), visible,
                                                cfg.future_tokens(), options.steps, model.vocabulary_mask());
            f.future_tokens = std::move(res.tokens);
            f.trace = std::move(res.trace);
        }
        const auto role = cfg.dual_decoder ? tokenizer::DecoderRole::Future : tokenizer::DecoderRole::History;
        f.trend = tokenizer::decode_tokens(model.params, cfg.tokenizer, role, domain, f.future_tokens, cfg.horizon);
    }

    Tensor combined = f.trend;
    combined.add_inplace(f.season);
    f.values = decomposition::denormalize(combined, dh.stats);
    return f;
}

Tensor repeat_last(const Tensor& history, std::size_t horizon) {
    if (history.rows() == 0) throw DataError("repeat_last: empty history");
    const std::size_t c = history.cols();
    Tensor out({horizon, c});
    for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t j = 0; j < c; ++j) out(t, j) = history(history.rows() - 1, j);
    }
    return out;
}

data::EvalReport evaluate(const Model& model, const std::string& domain, std::span<const data::WindowPair> windows,
                          const EvalOptions& options) {
    const ModelConfig& cfg = model.config;
    std::vector<std::size_t> horizons = options.horizons.empty() ? std::vector{cfg.horizon} : options.horizons;
    for (std::size_t h : horizons) {
        if (h < 1 || h > cfg.horizon) {
            throw ConfigError("eval: horizon " + std::to_string(h) + " outside the model horizon 1.." +
                              std::to_string(cfg.horizon));
        }
    }
    if (windows.empty()) throw DataError("eval: no test windows for domain '" + domain + "'");

    const bool tokens = !options.self_truth && !options.seasonal_only && model.diffusion_trained;
    const bool recon = !options.self_truth && !options.seasonal_only;
    std::vector<Tensor> truths, preds;
    std::size_t hits = 0, token_total = 0;
    double recon_mse = 0.0, rcr = 0.0;
    for (const auto& w : windows) {
        truths.push_back(w.future);
        if (options.self_truth) {
            preds.push_back(w.future);
        } else {
            ForecastOptions fo{options.steps, options.seasonal_only, nullptr};
            Forecast f = forecast(model, domain, w.history, fo);
            if (tokens) {
                const auto truth_tokens = tokenize_pair(model, domain, w).future;
                for (std::size_t i = 0; i < truth_tokens.size(); ++i) hits += truth_tokens[i] == f.future_tokens.ids[i];
                token_total += truth_tokens.size();
            }
            preds.push_back(std::move(f.values));
        }
        if (recon) {
            ForecastOptions fo{options.steps, false, &w.future};
            recon_mse += data::mse_mae(w.future, forecast(model, domain, w.history, fo).values).first;
        }
        const auto dh = decomposition::normalize_and_decompose(w.history, cfg.moving_average, cfg.epsilon);
        const auto fitted =
            seasonal::evaluate_basis(model.basis, seasonal::fit_weights(model.basis, dh.season, 0), 0, cfg.history);
        Tensor residual = dh.season;
        for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= fitted[i];
        rcr += decomposition::residual_component_rate(dh.trend, fitted, residual);
    }
    const double n = static_cast<double>(windows.size());

    data::EvalReport report;
    report.domain = domain;
    for (std::size_t h : horizons) {
        std::vector<Tensor> t, p;
        double se = 0.0, ae = 0.0;
        for (std::size_t i = 0; i < truths.size(); ++i) {
            t.push_back(head_rows(truths[i], h));
            p.push_back(head_rows(preds[i], h));
            const auto [m, a] = data::mse_mae(t.back(), p.back());
            se += m;
            ae += a;
        }
        report.horizons.push_back(
            {h, se / n, ae / n, data::amad(t, p), data::amad_per_channel(t, p), windows.size()});
    }
    if (tokens) report.token_accuracy = static_cast<double>(hits) / static_cast<double>(token_total);
    if (recon) {
        report.reconstruction_mse = recon_mse / n;
        double final_mse = 0.0;
        for (std::size_t i = 0; i < truths.size(); ++i) final_mse += data::mse_mae(truths[i], preds[i]).first;
        if (final_mse > 0.0) report.reconstruction_rate = data::reconstruction_rate(recon_mse / n, final_mse / n);
    }
    report.rcr = rcr / n;
    return report;
}

}  // namespace onecast::pipeline
