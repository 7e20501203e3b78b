#include "onecast/pipeline/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "onecast/decomposition/decomposition.hpp"
#include "onecast/error.hpp"
#include "onecast/seasonal/seasonal.hpp"
#include "onecast/tokenizer/tokenizer.hpp"

namespace onecast::pipeline {

using decomposition::NormStats;
using numerics::derive_seed;
using numerics::Parameter;
using numerics::shape_string;
using numerics::Tape;
namespace ops = numerics;

namespace {

Var denorm(Tape& tape, Var x, const NormStats& stats) {
    return ops::add_row(ops::mul_row(x, tape.constant(stats.scale())), tape.constant(stats.mu));
}

std::vector<Parameter*> select_params(ParameterStore& store, bool (*keep)(const std::string&)) {
    std::vector<Parameter*> out;
    for (Parameter* p : store.select()) {
        if (keep(p->id)) out.push_back(p);
    }
    return out;
}

using Snapshot = std::map<std::string, Tensor>;

Snapshot snapshot(const std::vector<Parameter*>& params) {
    Snapshot s;
    for (const Parameter* p : params) s.emplace(p->id, p->value);
    return s;
}

void restore(const std::vector<Parameter*>& params, const Snapshot& s) {
    for (Parameter* p : params) p->value = s.at(p->id);
}

std::vector<const WindowPair*> shuffled(const std::vector<WindowPair>& windows, std::uint64_t seed) {
    std::vector<const WindowPair*> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(&w);
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::size_t batch_count(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

void check_finite(double loss, const char* what, std::size_t step) {
    if (!std::isfinite(loss)) {
        throw DivergenceError(std::string("non-finite ") + what + " at step " + std::to_string(step), step);
    }
}

}  // namespace

DomainData prepare_domain(const std::string& domain, const Tensor& series, const ModelConfig& cfg,
                          std::size_t stride, const data::SplitFractions& split) {
    auto s = data::make_split_windows(series, cfg.history, cfg.horizon, stride, split);
    if (s.train.empty()) throw DataError("domain '" + domain + "' has no training windows");
    return {domain, series.cols(), std::move(s.train), std::move(s.val), std::move(s.test)};
}

JointValues& JointValues::operator+=(const JointValues& o) {
    total += o.total;
    l1 += o.l1;
    l2 += o.l2;
    l3 += o.l3;
    codebook += o.codebook;
    return *this;
}

JointValues& JointValues::operator/=(double n) {
    total /= n;
    l1 /= n;
    l2 /= n;
    l3 /= n;
    codebook /= n;
    return *this;
}

nlohmann::json JointValues::to_json() const {
    return {{"l_joint", total}, {"l1", l1}, {"l2", l2}, {"l3", l3}, {"l_codebook", codebook}};
}

JointValues values_of(const JointTerms& t) {
    return {t.total.value().item(), t.l1.value().item(), t.l2.value().item(), t.l3.value().item(),
            t.codebook.value().item()};
}

JointTerms joint_loss(const Binder& bind, const Model& model, const std::string& domain, const WindowPair& pair,
                      double gamma, numerics::FrozenTrace* trace) {
    const ModelConfig& cfg = model.config;
    const auto& tcfg = cfg.tokenizer;
    const std::size_t channels = model.channels(domain);
    if (pair.history.rows() != cfg.history || pair.future.rows() != cfg.horizon || pair.history.cols() != channels ||
        pair.future.cols() != channels) {
        throw DimensionError("joint_loss: window " + shape_string(pair.history.shape()) + " -> " +
                             shape_string(pair.future.shape()) + " does not match L_h=" + std::to_string(cfg.history) +
                             ", L_f=" + std::to_string(cfg.horizon) + ", C=" + std::to_string(channels));
    }
    Tape& tape = bind.tape();
    const auto dh = decomposition::normalize_and_decompose(pair.history, cfg.moving_average, cfg.epsilon);
    const auto df = decomposition::normalize_and_decompose(pair.future, cfg.moving_average, cfg.epsilon);

    Var codes = tokenizer::transformed_codebook(bind);
    Var trend_h = tape.constant(dh.trend);
    Var trend_f = tape.constant(df.trend);

    JointTerms out;
    auto qh = tokenizer::quantize(tokenizer::encode(bind, tcfg, domain, trend_h), codes, tcfg.beta, trace);
    Var rec_h = tokenizer::decode(bind, tcfg, tokenizer::DecoderRole::History, domain, qh.straight, cfg.history);
    out.l1 = ops::mse(denorm(tape, trend_h, dh.stats), denorm(tape, rec_h, dh.stats));

    auto qf = tokenizer::quantize(tokenizer::encode(bind, tcfg, domain, trend_f), codes, tcfg.beta, trace);
    Var future_trend;  // in history-normalized units
    if (cfg.dual_decoder) {
        future_trend = tokenizer::decode(bind, tcfg, tokenizer::DecoderRole::Future, domain, qf.detached, cfg.horizon);
        out.l2 = ops::mse(denorm(tape, trend_f, df.stats), denorm(tape, future_trend, dh.stats));
    } else {
        Var rec_f = tokenizer::decode(bind, tcfg, tokenizer::DecoderRole::History, domain, qf.straight, cfg.horizon);
        out.l2 = ops::mse(denorm(tape, trend_f, df.stats), denorm(tape, rec_f, df.stats));
        future_trend = trace ? trace->detach(rec_f) : ops::stop_gradient(rec_f);
    }
    out.codebook = ops::add(qh.codebook_loss, qf.codebook_loss);

    Var weights = seasonal::predict_weights(bind, model.seasonal_config(), tape.constant(dh.season));
    Var basis = tape.constant(seasonal::basis_matrix(model.basis, static_cast<long>(cfg.history), cfg.horizon));
    Var future_season = ops::matmul(basis, weights);
    Var forecast = denorm(tape, ops::add(future_trend, future_season), dh.stats);
    out.l3 = ops::mse(tape.constant(pair.future), forecast);

    out.total = gamma > 0.0 ? ops::add(out.l3, ops::scale(ops::add(ops::add(out.l1, out.l2), out.codebook), gamma))
                            : out.l3;
    return out;
}

nlohmann::json StepRecord::to_json() const {
    nlohmann::json j = {{"stage", stage}, {"epoch", epoch}, {"step", step},
                        {"domain", domain}, {"loss", loss},   {"lr", lr}};
    for (const auto& [k, v] : components.items()) j[k] = v;
    return j;
}

std::vector<std::pair<std::size_t, std::size_t>> round_robin_schedule(std::span<const std::size_t> batches_per_domain) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t rounds =
        batches_per_domain.empty() ? 0 : *std::max_element(batches_per_domain.begin(), batches_per_domain.end());
    for (std::size_t b = 0; b < rounds; ++b) {
        for (std::size_t d = 0; d < batches_per_domain.size(); ++d) {
            if (b < batches_per_domain[d]) out.emplace_back(d, b);
        }
    }
    return out;
}

std::size_t select_best_epoch(std::span<const double> losses) {
    if (losses.empty()) throw ConfigError("select_best_epoch: no epochs");
    std::size_t best = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) {
        if (losses[i] < losses[best]) best = i;
    }
    return best;
}

JointTrainer::JointTrainer(Model& model)
    : model_(&model),
      optimizer_({model.train.lr, 0.9, 0.999, 1e-8, model.train.weight_decay}),
      params_(select_params(model.params, is_stage1_parameter)) {}

double JointTrainer::current_lr() const {
    const auto& t = model_->train;
    return numerics::decayed_lr(t.lr, t.lr_decay_factor, t.lr_decay_every_steps, steps());
}

JointValues JointTrainer::step(const std::string& domain, std::span<const WindowPair* const> batch) {
    if (batch.empty()) throw DataError("joint step: empty batch");
    for (Parameter* p : params_) p->zero_grad();
    const double n = static_cast<double>(batch.size());
    JointValues mean;
    for (const WindowPair* pair : batch) {
        Tape tape;
        Binder bind(tape, model_->params, is_stage1_parameter);
        JointTerms terms = joint_loss(bind, *model_, domain, *pair, model_->train.gamma);
        const JointValues v = values_of(terms);
        check_finite(v.total, "L_joint", steps() + 1);
        tape.backward(ops::scale(terms.total, 1.0 / n));
        mean += v;
    }
    mean /= n;
    optimizer_.step(params_, current_lr());
    return mean;
}

JointValues JointTrainer::evaluate(const std::string& domain, std::span<const WindowPair> windows) const {
    JointValues mean;
    if (windows.empty()) return mean;
    for (const WindowPair& pair : windows) {
        Tape tape;
        Binder bind(tape, std::as_const(model_->params));
        mean += values_of(joint_loss(bind, *model_, domain, pair, model_->train.gamma));
    }
    mean /= static_cast<double>(windows.size());
    return mean;
}

namespace {

void check_domains(const Model& model, const std::vector<DomainData>& data) {
    if (data.empty()) throw DataError("no training domains");
    for (const auto& d : data) {
        if (d.train.empty()) throw DataError("domain '" + d.domain + "' has no training windows");
        if (model.channels(d.domain) != d.train.front().history.cols()) {
            throw DataError("domain '" + d.domain + "': data has " + std::to_string(d.train.front().history.cols()) +
                            " channels, model expects " + std::to_string(model.channels(d.domain)));
        }
    }
}

}  // namespace

TrainSummary train_stage1(Model& model, const std::vector<DomainData>& data, const StepLogger& log) {
    check_domains(model, data);
    const TrainConfig& tc = model.train;
    JointTrainer trainer(model);
    std::vector<Parameter*> params = select_params(model.params, is_stage1_parameter);

    TrainSummary summary;
    Snapshot best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::vector<std::vector<const WindowPair*>> orders;
        std::vector<std::size_t> counts;
        for (const auto& d : data) {
            orders.push_back(shuffled(d.train, derive_seed(derive_seed(tc.seed, "stage1.shuffle." + d.domain), epoch)));
            counts.push_back(batch_count(d.train.size(), tc.batch_size));
        }
        double train_sum = 0.0;
        std::size_t train_n = 0;
        for (auto [d, b] : round_robin_schedule(counts)) {
            const auto& order = orders[d];
            const std::size_t lo = b * tc.batch_size, hi = std::min(order.size(), lo + tc.batch_size);
            const double lr = trainer.current_lr();
            const JointValues v = trainer.step(data[d].domain, std::span(order).subspan(lo, hi - lo));
            train_sum += v.total * static_cast<double>(hi - lo);
            train_n += hi - lo;
            if (log) log({"joint", epoch + 1, trainer.steps(), data[d].domain, v.total, lr, v.to_json()});
        }

        double val_sum = 0.0;
        std::size_t val_n = 0;
        for (const auto& d : data) {
            val_sum += trainer.evaluate(d.domain, d.val).total * static_cast<double>(d.val.size());
            val_n += d.val.size();
        }
        const double train_loss = train_sum / static_cast<double>(train_n);
        const double val_loss = val_n ? val_sum / static_cast<double>(val_n) : train_loss;
        check_finite(val_loss, "validation L_joint", trainer.steps());
        summary.epochs.push_back({epoch + 1, train_loss, val_loss});
        if (val_loss < best_loss) {
            best_loss = val_loss;
            best = snapshot(params);
        }
    }
    std::vector<double> curve;
    for (const auto& e : summary.epochs) curve.push_back(e.val_loss);
    summary.best_epoch = select_best_epoch(curve) + 1;
    summary.best_val_loss = best_loss;
    summary.steps = trainer.steps();
    restore(params, best);

    model.joint_trained = true;
    model.metadata["joint"] = {{"best_epoch", summary.best_epoch},
                               {"validation_l_joint", summary.best_val_loss},
                               {"epochs", summary.epochs.size()},
                               {"steps", summary.steps}};
    return summary;
}

DiffusionTrainer::DiffusionTrainer(ParameterStore& store, const diffusion::PredictorConfig& cfg,
                                   Tensor token_embeddings, const TrainConfig& train)
    : store_(&store),
      cfg_(cfg),
      embeddings_(std::move(token_embeddings)),
      train_(train),
      optimizer_({train.diffusion_lr, 0.9, 0.999, 1e-8, train.weight_decay}),
      params_(select_params(store, is_stage2_parameter)) {
    if (params_.empty()) throw CheckpointError("diffusion trainer: store has no predictor parameters");
}

namespace {

struct Corrupted {
    std::vector<int> ids;  // history then corrupted future
    std::vector<int> targets;
    std::vector<bool> masked;
    bool any = false;
};

Corrupted corrupt_pair(const TokenPair& pair, diffusion::MaskScheduler sched, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double p = diffusion::mask_probability(sched, t);
    const auto future = diffusion::corrupt(tokenizer::TokenSequence{pair.future, 0, 0}, p, rng);
    Corrupted c;
    c.ids = pair.history;
    c.ids.insert(c.ids.end(), future.ids.begin(), future.ids.end());
    c.targets = pair.history;
    c.targets.insert(c.targets.end(), pair.future.begin(), pair.future.end());
    c.masked.assign(pair.history.size(), false);
    for (int id : future.ids) {
        c.masked.push_back(id == tokenizer::kMaskToken);
        c.any = c.any || id == tokenizer::kMaskToken;
    }
    return c;
}

}  // namespace

std::optional<double> DiffusionTrainer::step(std::span<const TokenPair* const> batch,
                                             std::span<const std::uint64_t> seeds) {
    if (batch.size() != seeds.size()) throw DimensionError("diffusion step: one seed per batch element required");
    std::vector<Corrupted> items;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Corrupted c = corrupt_pair(*batch[i], train_.scheduler, seeds[i]);
        if (c.any) items.push_back(std::move(c));
    }
    if (items.empty()) return std::nullopt;

    for (Parameter* p : params_) p->zero_grad();
    const double n = static_cast<double>(items.size());
    double mean = 0.0;
    for (const Corrupted& c : items) {
        Tape tape;
        Binder bind(tape, *store_, is_stage2_parameter);
        Var logits = diffusion::predictor_forward(bind, cfg_, tape.constant_ref(embeddings_), c.ids);
        Var loss = diffusion::diffusion_loss(logits, c.targets, c.masked);
        const double v = loss.value().item();
        check_finite(v, "diffusion loss", steps() + 1);
        tape.backward(ops::scale(loss, 1.0 / n));
        mean += v / n;
    }
    optimizer_.step(params_,
                    numerics::decayed_lr(train_.diffusion_lr, train_.lr_decay_factor, train_.lr_decay_every_steps,
                                         steps()));
    return mean;
}

double DiffusionTrainer::evaluate(std::span<const TokenPair> pairs, std::uint64_t seed) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Corrupted c = corrupt_pair(pairs[i], train_.scheduler, derive_seed(seed, i));
        if (!c.any) continue;
        Tape tape;
        Binder bind(tape, std::as_const(*store_));
        Var logits = diffusion::predictor_forward(bind, cfg_, tape.constant_ref(embeddings_), c.ids);
        sum += diffusion::diffusion_loss(logits, c.targets, c.masked).value().item();
        ++n;
    }
    return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

TrainSummary train_token_predictor(ParameterStore& store, const diffusion::PredictorConfig& cfg,
                                   const Tensor& token_embeddings, const std::vector<std::vector<TokenPair>>& train,
                                   const std::vector<TokenPair>& val, const TrainConfig& tc, const StepLogger& log,
                                   const std::vector<std::string>& group_names) {
    tc.validate();
    cfg.validate();
    if (train.empty() || std::all_of(train.begin(), train.end(), [](const auto& g) { return g.empty(); })) {
        throw DataError("token predictor: no training pairs");
    }
    if (!diffusion::has_predictor(store)) {
        std::mt19937_64 rng(derive_seed(tc.seed, "predictor"));
        diffusion::init_predictor(store, cfg, token_embeddings, rng);
    }
    DiffusionTrainer trainer(store, cfg, token_embeddings, tc);
    std::vector<Parameter*> params = select_params(store, is_stage2_parameter);
    auto name = [&](std::size_t g) { return g < group_names.size() ? group_names[g] : std::to_string(g); };

    TrainSummary summary;
    Snapshot best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < tc.diffusion_epochs; ++epoch) {
        std::vector<std::vector<std::size_t>> orders;
        std::vector<std::size_t> counts;
        for (std::size_t g = 0; g < train.size(); ++g) {
            std::vector<std::size_t> idx(train[g].size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::mt19937_64 rng(derive_seed(derive_seed(tc.seed, "stage2.shuffle." + name(g)), epoch));
            std::shuffle(idx.begin(), idx.end(), rng);
            orders.push_back(std::move(idx));
            counts.push_back(batch_count(train[g].size(), tc.batch_size));
        }
        const std::uint64_t epoch_seed = derive_seed(derive_seed(tc.seed, "stage2.mask"), epoch);
        double train_sum = 0.0;
        std::size_t train_n = 0;
        for (auto [g, b] : round_robin_schedule(counts)) {
            const std::uint64_t group_seed = derive_seed(epoch_seed, g);
            const std::size_t lo = b * tc.batch_size, hi = std::min(orders[g].size(), lo + tc.batch_size);
            std::vector<const TokenPair*> batch;
            std::vector<std::uint64_t> seeds;
            for (std::size_t i = lo; i < hi; ++i) {
                batch.push_back(&train[g][orders[g][i]]);
                seeds.push_back(derive_seed(group_seed, orders[g][i]));
            }
            const double lr =
                numerics::decayed_lr(tc.diffusion_lr, tc.lr_decay_factor, tc.lr_decay_every_steps, trainer.steps());
            const auto loss = trainer.step(batch, seeds);
            if (!loss) continue;
            train_sum += *loss;
            ++train_n;
            if (log) log({"diffusion", epoch + 1, trainer.steps(), name(g), *loss, lr, nlohmann::json::object()});
        }
        const double train_loss =
            train_n ? train_sum / static_cast<double>(train_n) : std::numeric_limits<double>::quiet_NaN();
        double val_loss = val.empty() ? train_loss : trainer.evaluate(val, derive_seed(tc.seed, "stage2.val"));
        if (std::isnan(val_loss)) val_loss = train_loss;
        summary.epochs.push_back({epoch + 1, train_loss, val_loss});
        if (!std::isnan(val_loss)) check_finite(val_loss, "validation diffusion loss", trainer.steps());
        if (val_loss < best_loss || best.empty()) {
            best_loss = val_loss;
            best = snapshot(params);
        }
    }
    std::vector<double> curve;
    for (const auto& e : summary.epochs) {
        curve.push_back(std::isnan(e.val_loss) ? std::numeric_limits<double>::infinity() : e.val_loss);
    }
    summary.best_epoch = select_best_epoch(curve) + 1;
    summary.best_val_loss = best_loss;
    summary.steps = trainer.steps();
    restore(params, best);
    return summary;
}

TokenPair tokenize_pair(const Model& model, const std::string& domain, const WindowPair& pair) {
    const auto& cfg = model.config;
    const auto dh = decomposition::normalize_and_decompose(pair.history, cfg.moving_average, cfg.epsilon);
    const auto df = decomposition::normalize_and_decompose(pair.future, cfg.moving_average, cfg.epsilon);
    return {model.remap_abandoned(tokenizer::tokenize(model.params, cfg.tokenizer, domain, dh.trend).ids),
            model.remap_abandoned(tokenizer::tokenize(model.params, cfg.tokenizer, domain, df.trend).ids)};
}

TrainSummary train_stage2(Model& model, const std::vector<DomainData>& data, const StepLogger& log) {
    if (!model.joint_trained) throw CheckpointError("stage 2 needs a tokenizer trained by stage 1");
    check_domains(model, data);
    model.abandoned_tokens.clear();
    if (model.train.abandon_threshold > 0.0) {
        const std::size_t k = model.config.tokenizer.codebook_size;
        std::vector<std::size_t> counts(k, 0);
        std::size_t total = 0;
        for (const auto& d : data) {
            for (const auto& w : d.train) {
                const TokenPair p = tokenize_pair(model, d.domain, w);
                for (int id : p.history) ++counts[static_cast<std::size_t>(id)];
                for (int id : p.future) ++counts[static_cast<std::size_t>(id)];
                total += p.history.size() + p.future.size();
            }
        }
        const auto keep = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        for (std::size_t id = 0; id < k; ++id) {
            const double freq = total ? static_cast<double>(counts[id]) / static_cast<double>(total) : 0.0;
            if (id != keep && freq < model.train.abandon_threshold) model.abandoned_tokens.push_back(static_cast<int>(id));
        }
    }
    std::vector<std::vector<TokenPair>> train;
    std::vector<TokenPair> val;
    std::vector<std::string> names;
    for (const auto& d : data) {
        std::vector<TokenPair> pairs;
        pairs.reserve(d.train.size());
        for (const auto& w : d.train) pairs.push_back(tokenize_pair(model, d.domain, w));
        train.push_back(std::move(pairs));
        for (const auto& w : d.val) val.push_back(tokenize_pair(model, d.domain, w));
        names.push_back(d.domain);
    }
    TrainSummary summary = train_token_predictor(model.params, model.config.predictor(), model.token_embeddings(),
                                                 train, val, model.train, log, names);
    model.diffusion_trained = true;
    model.metadata["diffusion"] = {{"best_epoch", summary.best_epoch},
                                   {"validation_loss", summary.best_val_loss},
                                   {"epochs", summary.epochs.size()},
                                   {"steps", summary.steps},
                                   {"abandoned_tokens", model.abandoned_tokens.size()},
                                   {"scheduler", diffusion::to_string(model.train.scheduler)}};
    return summary;
}

double token_accuracy(const ParameterStore& store, const diffusion::PredictorConfig& cfg,
                      const Tensor& token_embeddings, std::span<const TokenPair> pairs, std::size_t steps) {
    std::size_t hit = 0, total = 0;
    for (const auto& p : pairs) {
        const auto res = diffusion::denoise_infer(store, cfg, token_embeddings, tokenizer::TokenSequence{p.history, 0, 0},
                                                  p.future.size(), steps);
        for (std::size_t i = 0; i < p.future.size(); ++i) hit += res.tokens.ids[i] == p.future[i];
        total += p.future.size();
    }
    if (total == 0) throw DataError("token_accuracy: no tokens");
    return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace onecast::pipeline
