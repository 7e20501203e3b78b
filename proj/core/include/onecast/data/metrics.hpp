#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "onecast/numerics/tensor.hpp"

namespace onecast::data {

using numerics::Tensor;

/// (mean squared error, mean absolute error) over all elements.
std::pair<double, double> mse_mae(const Tensor& truth, const Tensor& pred);

/// Average over samples of |mean(truth_i) - mean(pred_i)|, channels pooled.
double amad(const std::vector<Tensor>& truths, const std::vector<Tensor>& preds);
/// Same gap computed per channel, one entry per channel.
std::vector<double> amad_per_channel(const std::vector<Tensor>& truths, const std::vector<Tensor>& preds);

enum class TokenScheme { Patching, PerValue, Text, OneCast };
TokenScheme parse_token_scheme(const std::string& name);
std::string to_string(TokenScheme s);

/// Tokens needed to encode an L-step, C-channel window:
///   patching ceil(L/P)*C, per_value L*C, text k*L*C, onecast ceil(L/P) + vocab.
long long token_budget(TokenScheme scheme, long long length, long long patch, long long channels,
                       long long text_tokens_per_value, long long seasonal_vocab);

/// reconst / final; throws when final is zero.
double reconstruction_rate(double reconst_mse, double final_mse);

struct HorizonMetrics {
    std::size_t horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    double amad = 0.0;
    std::vector<double> amad_per_channel;
    std::size_t windows = 0;
};

struct EvalReport {
    std::string domain;
    std::vector<HorizonMetrics> horizons;
    std::optional<double> token_accuracy;
    std::optional<double> reconstruction_mse;
    std::optional<double> reconstruction_rate;
    std::optional<double> rcr;

    std::string to_json() const;
    /// One row per horizon; scalar diagnostics repeated on each row.
    std::string to_csv() const;
};

}  // namespace onecast::data
