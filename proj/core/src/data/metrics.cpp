#include "onecast/data/metrics.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "onecast/error.hpp"

namespace onecast::data {
namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": " + numerics::shape_string(a.shape()) + " vs " +
                             numerics::shape_string(b.shape()));
    }
}

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    return s / static_cast<double>(t.size());
}

}  // namespace

std::pair<double, double> mse_mae(const Tensor& truth, const Tensor& pred) {
    require_same(truth, pred, "mse_mae");
    if (truth.empty()) return {0.0, 0.0};
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - pred[i];
        se += d * d;
        ae += std::abs(d);
    }
    const double n = static_cast<double>(truth.size());
    return {se / n, ae / n};
}

double amad(const std::vector<Tensor>& truths, const std::vector<Tensor>& preds) {
    if (truths.empty()) throw DataError("amad: no samples");
    if (truths.size() != preds.size()) throw DimensionError("amad: sample counts differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        require_same(truths[i], preds[i], "amad");
        acc += std::abs(mean_of(truths[i]) - mean_of(preds[i]));
    }
    return acc / static_cast<double>(truths.size());
}

std::vector<double> amad_per_channel(const std::vector<Tensor>& truths, const std::vector<Tensor>& preds) {
    if (truths.empty()) throw DataError("amad: no samples");
    if (truths.size() != preds.size()) throw DimensionError("amad: sample counts differ");
    const std::size_t ch = truths.front().cols();
    std::vector<double> acc(ch, 0.0);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        require_same(truths[i], preds[i], "amad");
        const std::size_t len = truths[i].rows();
        for (std::size_t c = 0; c < ch; ++c) {
            double mt = 0.0, mp = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                mt += truths[i](t, c);
                mp += preds[i](t, c);
            }
            acc[c] += std::abs(mt - mp) / static_cast<double>(len);
        }
    }
    for (double& v : acc) v /= static_cast<double>(truths.size());
    return acc;
}

TokenScheme parse_token_scheme(const std::string& name) {
    if (name == "patching") return TokenScheme::Patching;
    if (name == "per_value") return TokenScheme::PerValue;
    if (name == "text") return TokenScheme::Text;
    if (name == "onecast") return TokenScheme::OneCast;
    throw ConfigError("unknown token scheme '" + name + "' (expected patching, per_value, text or onecast)");
}

std::string to_string(TokenScheme s) {
    switch (s) {
        case TokenScheme::Patching: return "patching";
        case TokenScheme::PerValue: return "per_value";
        case TokenScheme::Text: return "text";
        case TokenScheme::OneCast: return "onecast";
    }
    return "?";
}

long long token_budget(TokenScheme scheme, long long length, long long patch, long long channels,
                       long long text_tokens_per_value, long long seasonal_vocab) {
    if (length < 1) throw ConfigError("token_budget: length must be positive");
    auto patches = [&] {
        if (patch < 1) throw ConfigError("token_budget: patch length must be positive");
        return (length + patch - 1) / patch;
    };
    auto need_channels = [&] {
        if (channels < 1) throw ConfigError("token_budget: channel count must be positive");
        return channels;
    };
    switch (scheme) {
        case TokenScheme::Patching: return patches() * need_channels();
        case TokenScheme::PerValue: return length * need_channels();
        case TokenScheme::Text:
            if (text_tokens_per_value < 1) throw ConfigError("token_budget: k must be positive");
            return text_tokens_per_value * length * need_channels();
        case TokenScheme::OneCast:
            if (seasonal_vocab < 0) throw ConfigError("token_budget: vocabulary must be non-negative");
            return patches() + seasonal_vocab;
    }
    return 0;
}

double reconstruction_rate(double reconst_mse, double final_mse) {
    if (final_mse == 0.0) throw NumericError("reconstruction_rate: final MSE is zero, rate undefined");
    return reconst_mse / final_mse;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["domain"] = domain;
    j["horizons"] = nlohmann::json::array();
    for (const HorizonMetrics& h : horizons) {
        j["horizons"].push_back({{"horizon", h.horizon},
                                 {"mse", h.mse},
                                 {"mae", h.mae},
                                 {"amad", h.amad},
                                 {"amad_per_channel", h.amad_per_channel},
                                 {"windows", h.windows}});
    }
    auto opt = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
        else j[key] = nullptr;
    };
    opt("token_accuracy", token_accuracy);
    opt("reconstruction_mse", reconstruction_mse);
    opt("reconstruction_rate", reconstruction_rate);
    opt("rcr", rcr);
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "domain,horizon,windows,mse,mae,amad,token_accuracy,reconstruction_mse,reconstruction_rate,rcr\n";
    auto opt = [](const std::optional<double>& v) {
        std::ostringstream s;
        s.precision(17);
        if (v) s << *v;
        return s.str();
    };
    for (const HorizonMetrics& h : horizons) {
        os << domain << ',' << h.horizon << ',' << h.windows << ',' << h.mse << ',' << h.mae << ',' << h.amad << ','
           << opt(token_accuracy) << ',' << opt(reconstruction_mse) << ',' << opt(reconstruction_rate) << ','
           << opt(rcr) << '\n';
    }
    return os.str();
}

}  // namespace onecast::data
