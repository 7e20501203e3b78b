#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "onecast/data/dataset.hpp"
#include "onecast/numerics/frozen_trace.hpp"
#include "onecast/numerics/optimizer.hpp"
#include "onecast/pipeline/model.hpp"

namespace onecast::pipeline {

using data::WindowPair;
using numerics::Binder;
using numerics::Var;

/// Chronologically split windows of one domain.
struct DomainData {
    std::string domain;
    std::size_t channels = 0;
    std::vector<WindowPair> train;
    std::vector<WindowPair> val;
    std::vector<WindowPair> test;
};

/// Throws DataError when the series yields no training window.
DomainData prepare_domain(const std::string& domain, const Tensor& series, const ModelConfig& cfg,
                          std::size_t stride, const data::SplitFractions& split = {});

struct JointTerms {
    Var total;
    Var l1;        // history reconstruction
    Var l2;        // future trend through the future decoder
    Var l3;        // final forecast
    Var codebook;  // both windows
};

struct JointValues {
    double total = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0, codebook = 0.0;

    JointValues& operator+=(const JointValues& o);
    JointValues& operator/=(double n);
    nlohmann::json to_json() const;
};
JointValues values_of(const JointTerms& t);

/// L_joint = L3 + gamma (L1 + L2 + L_codebook) for one window pair, built on
/// the binder's tape. With gamma = 0 the trend terms are left out entirely.
JointTerms joint_loss(const Binder& bind, const Model& model, const std::string& domain, const WindowPair& pair,
                      double gamma, numerics::FrozenTrace* trace = nullptr);

/// One line of the training log.
struct StepRecord {
    std::string stage;
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::string domain;
    double loss = 0.0;
    double lr = 0.0;
    nlohmann::json components = nlohmann::json::object();

    nlohmann::json to_json() const;
};
using StepLogger = std::function<void(const StepRecord&)>;

/// Order in which per-domain batches are visited: domain 0 batch 0, domain 1
/// batch 0, ..., domain 0 batch 1, ...; exhausted domains drop out.
std::vector<std::pair<std::size_t, std::size_t>> round_robin_schedule(std::span<const std::size_t> batches_per_domain);

/// Index of the smallest value; ties go to the earliest. Throws on empty input.
std::size_t select_best_epoch(std::span<const double> losses);

class JointTrainer {
public:
    explicit JointTrainer(Model& model);

    /// One optimizer step on the mean loss of `batch`. Returns the loss before
    /// the update. Throws DivergenceError on a non-finite loss.
    JointValues step(const std::string& domain, std::span<const WindowPair* const> batch);
    /// Mean teacher-forced loss, no update.
    JointValues evaluate(const std::string& domain, std::span<const WindowPair> windows) const;
    std::size_t steps() const noexcept { return optimizer_.steps(); }
    double current_lr() const;

private:
    Model* model_;
    numerics::AdamW optimizer_;
    std::vector<numerics::Parameter*> params_;
};

struct EpochSummary {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainSummary {
    std::vector<EpochSummary> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::size_t steps = 0;
};

/// Stage I: joint tokenizer + seasonal training. Keeps the parameters of the
/// epoch with the lowest validation L_joint.
TrainSummary train_stage1(Model& model, const std::vector<DomainData>& data, const StepLogger& log = {});

/// Token pair for the predictor: history ids followed by future ids.
struct TokenPair {
    std::vector<int> history;
    std::vector<int> future;
};

class DiffusionTrainer {
public:
    DiffusionTrainer(ParameterStore& store, const diffusion::PredictorConfig& cfg, Tensor token_embeddings,
                     const TrainConfig& train);

    /// One step over the batch; element i draws its noise level and mask from
    /// seeds[i]. Elements with nothing masked are dropped; when all are, the
    /// step is skipped and nullopt returned.
    std::optional<double> step(std::span<const TokenPair* const> batch, std::span<const std::uint64_t> seeds);
    /// Mean loss with corruption seeded by `seed` and the pair index.
    double evaluate(std::span<const TokenPair> pairs, std::uint64_t seed) const;
    std::size_t steps() const noexcept { return optimizer_.steps(); }

private:
    ParameterStore* store_;
    diffusion::PredictorConfig cfg_;
    Tensor embeddings_;
    TrainConfig train_;
    numerics::AdamW optimizer_;
    std::vector<numerics::Parameter*> params_;
};

/// Trains (creating if needed) a predictor in `store` on grouped token pairs,
/// visiting groups round-robin. Keeps the epoch with the lowest validation loss.
TrainSummary train_token_predictor(ParameterStore& store, const diffusion::PredictorConfig& cfg,
                                   const Tensor& token_embeddings, const std::vector<std::vector<TokenPair>>& train,
                                   const std::vector<TokenPair>& val, const TrainConfig& train_cfg,
                                   const StepLogger& log = {}, const std::vector<std::string>& group_names = {});

/// History and future tokens of one window with the frozen tokenizer.
TokenPair tokenize_pair(const Model& model, const std::string& domain, const WindowPair& pair);

/// Stage II: freezes the tokenizer, tokenizes every window and trains the
/// token predictor.
TrainSummary train_stage2(Model& model, const std::vector<DomainData>& data, const StepLogger& log = {});

/// Fraction of future tokens reproduced by denoising inference.
double token_accuracy(const ParameterStore& store, const diffusion::PredictorConfig& cfg,
                      const Tensor& token_embeddings, std::span<const TokenPair> pairs, std::size_t steps);

}  // namespace onecast::pipeline
