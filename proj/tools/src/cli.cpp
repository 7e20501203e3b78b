#include "onecast/cli/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "onecast/cli/run_config.hpp"
#include "onecast/data/metrics.hpp"
#include "onecast/data/plot.hpp"
#include "onecast/decomposition/decomposition.hpp"
#include "onecast/error.hpp"
#include "onecast/pipeline/checkpoint.hpp"
#include "onecast/pipeline/forecast.hpp"
#include "onecast/pipeline/selfcheck.hpp"
#include "onecast/pipeline/training.hpp"
#include "onecast/seasonal/seasonal.hpp"

namespace onecast::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using numerics::Tensor;

namespace {

constexpr const char* kOutputEnv = "ONECAST_OUTPUT_DIR";

std::string output_dir(const std::string& flag, const std::string& configured) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
    return configured;
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw DataError("cannot write '" + path.string() + "'");
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw DataError(what + " '" + path + "' does not exist");
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
}

std::string pick_domain(const pipeline::Model& model, const std::string& requested) {
    if (!requested.empty()) {
        model.channels(requested);
        return requested;
    }
    if (model.domains.size() != 1) throw ConfigError("checkpoint has several domains; pass --domain");
    return model.domains.begin()->first;
}

Tensor tail_rows(const Tensor& t, std::size_t rows) {
    const std::size_t c = t.cols();
    return Tensor({rows, c}, std::vector<double>(t.storage().end() - static_cast<long>(rows * c), t.storage().end()));
}

Tensor stats_table(const decomposition::NormStats& s) {
    Tensor out({s.channels(), 2});
    for (std::size_t c = 0; c < s.channels(); ++c) {
        out(c, 0) = s.mu[c];
        out(c, 1) = s.sigma[c];
    }
    return out;
}

// ---------------------------------------------------------------- decompose

struct DecomposeArgs {
    std::string input, config, output;
    std::size_t moving_average = 0;
    std::vector<std::string> set;
};

int cmd_decompose(const DecomposeArgs& a, std::ostream& out) {
    RunConfig cfg = resolve_config(a.config, a.set);
    if (a.moving_average) cfg.model.moving_average = a.moving_average;
    cfg.validate();
    require_file(a.input, "input");
    const Tensor series = data::load_csv(a.input);
    const auto& m = cfg.model;
    const auto dw = decomposition::normalize_and_decompose(series, m.moving_average, m.epsilon);
    const auto basis = seasonal::build_basis(m.resolved_basis_periods());
    const Tensor fitted = seasonal::evaluate_basis(basis, seasonal::fit_weights(basis, dw.season, 0), 0, series.rows());
    Tensor residual = dw.season;
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= fitted[i];
    const double rcr = decomposition::residual_component_rate(dw.trend, fitted, residual);

    const fs::path dir = output_dir(a.output, cfg.output_dir);
    make_dir(dir);
    data::write_csv((dir / "trend.csv").string(), dw.trend);
    data::write_csv((dir / "season.csv").string(), dw.season);
    data::write_csv((dir / "residual.csv").string(), residual);
    data::write_csv((dir / "stats.csv").string(), stats_table(dw.stats), {"mu", "sigma"});
    const json summary{{"input", a.input},
                       {"rows", series.rows()},
                       {"channels", series.cols()},
                       {"moving_average", m.moving_average},
                       {"epsilon", m.epsilon},
                       {"basis_periods", m.resolved_basis_periods()},
                       {"rcr", rcr}};
    write_text(dir / "decompose.json", summary.dump(2) + "\n");
    out << "wrote " << dir.string() << "/{trend,season,residual,stats}.csv\n";
    out << "rcr " << std::setprecision(17) << rcr << "\n";
    return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
    std::string input, dir;
    double tolerance = 1e-9;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
    require_file(a.input, "input");
    const fs::path dir = a.dir;
    require_file((dir / "decompose.json").string(), "decomposition summary");
    json summary;
    try {
        summary = json::parse(std::ifstream(dir / "decompose.json"));
    } catch (const json::exception& e) {
        throw DataError("corrupt decompose.json: " + std::string(e.what()));
    }
    const Tensor series = data::load_csv(a.input);
    const auto [norm, stats] = decomposition::instance_normalize(series, summary.at("epsilon").get<double>());
    const Tensor trend = data::load_csv((dir / "trend.csv").string());
    const Tensor season = data::load_csv((dir / "season.csv").string());
    const Tensor stored_stats = data::load_csv((dir / "stats.csv").string());
    if (!trend.same_shape(norm) || !season.same_shape(norm)) {
        throw DataError("trend/season shapes do not match the input " + numerics::shape_string(norm.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < norm.size(); ++i) worst = std::max(worst, std::abs(trend[i] + season[i] - norm[i]));
    const Tensor expect = stats_table(stats);
    double stats_err = stored_stats.same_shape(expect) ? 0.0 : INFINITY;
    for (std::size_t i = 0; std::isfinite(stats_err) && i < expect.size(); ++i) {
        stats_err = std::max(stats_err, std::abs(stored_stats[i] - expect[i]));
    }
    out << "trend+season vs normalized input: max |error| " << worst << "\n";
    out << "stored statistics: max |error| " << stats_err << "\n";
    if (worst > a.tolerance || stats_err > a.tolerance) throw DataError("verification failed");
    out << "ok\n";
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config, output, checkpoint, stage;
    std::vector<std::string> datasets, set;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, diffusion_epochs;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    RunConfig cfg = resolve_config(a.config, a.set);
    for (const auto& d : a.datasets) {
        const auto eq = d.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--dataset expects id=path, got '" + d + "'");
        apply_override(cfg, "dataset." + d.substr(0, eq) + ".path=" + d.substr(eq + 1));
    }
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.diffusion_epochs) cfg.train.diffusion_epochs = *a.diffusion_epochs;
    if (!a.stage.empty()) cfg.train.stage = pipeline::parse_stage(a.stage);
    cfg.validate();
    if (cfg.datasets.empty()) throw ConfigError("no datasets configured; add [dataset.<id>] sections or --dataset");
    const bool resume = cfg.train.stage == pipeline::Stage::Diffusion;
    if (resume && a.checkpoint.empty()) throw ConfigError("--stage diffusion needs --checkpoint from a joint run");
    if (!resume && !a.checkpoint.empty()) throw ConfigError("--checkpoint is only used with --stage diffusion");

    pipeline::Model model;
    if (resume) {
        model = pipeline::load_checkpoint(a.checkpoint);
        if (!model.joint_trained) throw CheckpointError(a.checkpoint + ": stage one was never trained");
        model.train.diffusion_lr = cfg.train.diffusion_lr;
        model.train.diffusion_epochs = cfg.train.diffusion_epochs;
        model.train.scheduler = cfg.train.scheduler;
        model.train.batch_size = cfg.train.batch_size;
        model.train.stage = cfg.train.stage;
        model.train.seed = cfg.train.seed;
    }
    const pipeline::ModelConfig& mc = resume ? model.config : cfg.model;
    std::vector<pipeline::DomainData> domains;
    std::map<std::string, std::size_t> channels;
    for (const auto& spec : cfg.datasets) {
        require_file(spec.path, "dataset '" + spec.domain_id + "'");
        const Tensor series = data::load_csv(spec);
        domains.push_back(pipeline::prepare_domain(spec.domain_id, series, mc, cfg.train.window_stride, spec.split));
        channels[spec.domain_id] = series.cols();
        if (resume && model.channels(spec.domain_id) != series.cols()) {
            throw DimensionError("dataset '" + spec.domain_id + "' has " + std::to_string(series.cols()) +
                                 " channels, the checkpoint expects " +
                                 std::to_string(model.channels(spec.domain_id)));
        }
    }
    if (!resume) model = pipeline::create_model(cfg.model, cfg.train, channels);

    const fs::path dir = output_dir(a.output, cfg.output_dir);
    make_dir(dir);
    write_text(dir / "config.ini", to_ini(cfg));
    std::ofstream log(dir / "train.jsonl", std::ios::trunc);
    if (!log) throw DataError("cannot write " + (dir / "train.jsonl").string());
    const pipeline::StepLogger logger = [&log](const pipeline::StepRecord& r) { log << r.to_json().dump() << '\n'; };

    json report = json::object();
    auto summarize = [](const pipeline::TrainSummary& s) {
        json epochs = json::array();
        for (const auto& e : s.epochs) epochs.push_back({{"epoch", e.epoch}, {"train", e.train_loss}, {"val", e.val_loss}});
        return json{{"best_epoch", s.best_epoch}, {"best_val_loss", s.best_val_loss}, {"steps", s.steps}, {"epochs", epochs}};
    };
    if (cfg.train.stage != pipeline::Stage::Diffusion) {
        const auto s = pipeline::train_stage1(model, domains, logger);
        pipeline::save_checkpoint(model, (dir / "joint.ockpt").string());
        report["joint"] = summarize(s);
        out << "stage joint: " << s.steps << " steps, best epoch " << s.best_epoch << ", val L_joint "
            << s.best_val_loss << " -> " << (dir / "joint.ockpt").string() << "\n";
    }
    if (cfg.train.stage != pipeline::Stage::Joint) {
        const auto s = pipeline::train_stage2(model, domains, logger);
        pipeline::save_checkpoint(model, (dir / "diffusion.ockpt").string());
        report["diffusion"] = summarize(s);
        out << "stage diffusion: " << s.steps << " steps, best epoch " << s.best_epoch << ", val loss "
            << s.best_val_loss << " -> " << (dir / "diffusion.ockpt").string() << "\n";
    }
    log.flush();
    write_text(dir / "train_summary.json", report.dump(2) + "\n");
    return kOk;
}

// ---------------------------------------------------------------- forecast

struct ForecastArgs {
    std::string checkpoint, input, domain, output, plot;
    std::size_t horizon = 0, steps = 0;
    bool seasonal_only = false;
};

int cmd_forecast(const ForecastArgs& a, std::ostream& out) {
    require_file(a.checkpoint, "checkpoint");
    require_file(a.input, "input");
    const pipeline::Model model = pipeline::load_checkpoint(a.checkpoint);
    const auto& mc = model.config;
    if (a.horizon && a.horizon != mc.horizon) {
        throw ConfigError("requested horizon " + std::to_string(a.horizon) + " but the checkpoint was trained for " +
                          std::to_string(mc.horizon));
    }
    const std::string domain = pick_domain(model, a.domain);
    const Tensor series = data::load_csv(a.input);
    if (series.rows() < mc.history) {
        throw DataError("input has " + std::to_string(series.rows()) + " rows, the model needs " +
                        std::to_string(mc.history));
    }
    pipeline::ForecastOptions fo;
    fo.steps = a.steps ? a.steps : model.train.inference_steps;
    fo.seasonal_only = a.seasonal_only;
    const Tensor history = tail_rows(series, mc.history);
    const auto f = pipeline::forecast(model, domain, history, fo);
    if (f.future_tokens.has_mask()) throw NumericError("forecast left masked tokens");

    const fs::path path = a.output.empty() ? fs::path(output_dir("", "onecast_out")) / "forecast.csv" : fs::path(a.output);
    if (path.has_parent_path()) make_dir(path.parent_path());
    data::write_csv(path.string(), f.values);
    out << "wrote " << f.values.rows() << " x " << f.values.cols() << " forecast to " << path.string() << "\n";
    if (!a.plot.empty()) {
        const fs::path plot = a.plot;
        if (plot.has_parent_path()) make_dir(plot.parent_path());
        write_text(plot, data::forecast_svg(history, Tensor(), f.values));
        out << "wrote plot " << plot.string() << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint, input, config, domain, output, horizons;
    std::size_t steps = 0, stride = 0;
    bool self_truth = false, seasonal_only = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const RunConfig cfg = resolve_config(a.config, {});
    cfg.validate();
    const std::vector<std::size_t> horizons = parse_size_list(a.horizons);
    require_file(a.checkpoint, "checkpoint");
    const pipeline::Model model = pipeline::load_checkpoint(a.checkpoint);
    const std::string domain = pick_domain(model, a.domain);

    std::string path = a.input;
    data::SplitFractions split = cfg.split;
    for (const auto& d : cfg.datasets) {
        if (d.domain_id == domain) {
            if (path.empty()) path = d.path;
            split = d.split;
        }
    }
    if (path.empty()) throw ConfigError("no input for domain '" + domain + "'; pass --input or --config");
    for (std::size_t h : horizons) {
        if (h < 1 || h > model.config.horizon) {
            throw ConfigError("horizon " + std::to_string(h) + " outside 1.." + std::to_string(model.config.horizon));
        }
    }
    require_file(path, "input");
    const Tensor series = data::load_csv(path);
    if (series.cols() != model.channels(domain)) {
        throw DimensionError("input has " + std::to_string(series.cols()) + " channels, the checkpoint expects " +
                             std::to_string(model.channels(domain)));
    }
    const std::size_t stride = a.stride ? a.stride : model.train.window_stride;
    const auto windows = pipeline::prepare_domain(domain, series, model.config, stride, split).test;

    pipeline::EvalOptions eo;
    eo.horizons = horizons;
    eo.steps = a.steps ? a.steps : model.train.inference_steps;
    eo.seasonal_only = a.seasonal_only;
    eo.self_truth = a.self_truth;
    const data::EvalReport report = pipeline::evaluate(model, domain, windows, eo);

    const fs::path dir = output_dir(a.output, cfg.output_dir);
    make_dir(dir);
    write_text(dir / "eval.json", report.to_json() + "\n");
    write_text(dir / "eval.csv", report.to_csv());
    out << report.to_json() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- budget

struct BudgetArgs {
    std::string method = "all";
    long long length = 96, patch = 16, channels = 1, text_tokens = 3, vocab = 437;
    bool table = false;
};

int cmd_budget(const BudgetArgs& a, std::ostream& out) {
    if (a.length < 1 || a.patch < 1 || a.channels < 1 || a.text_tokens < 1 || a.vocab < 0) {
        throw ConfigError("budget: length, patch, channels and text tokens must be positive");
    }
    using data::TokenScheme;
    const std::vector<TokenScheme> all{TokenScheme::Patching, TokenScheme::PerValue, TokenScheme::Text,
                                       TokenScheme::OneCast};
    const std::vector<TokenScheme> schemes = a.method == "all" ? all : std::vector{data::parse_token_scheme(a.method)};
    auto count = [&](TokenScheme s, long long channels) {
        return data::token_budget(s, a.length, a.patch, channels, a.text_tokens, a.vocab);
    };
    if (!a.table) {
        for (auto s : schemes) out << std::left << std::setw(10) << data::to_string(s) << count(s, a.channels) << "\n";
        return kOk;
    }
    const std::vector<std::pair<std::string, long long>> datasets{
        {"CzeLan", 11}, {"FRED-MD", 107}, {"Traffic", 862}, {"Wike2000", 2000}};
    out << std::left << std::setw(10) << "method";
    for (const auto& [name, c] : datasets) out << std::right << std::setw(10) << name;
    out << "\n";
    for (auto s : schemes) {
        out << std::left << std::setw(10) << data::to_string(s);
        for (const auto& [name, c] : datasets) out << std::right << std::setw(10) << count(s, c);
        out << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- selfcheck

int cmd_selfcheck(const pipeline::SelfcheckOptions& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = pipeline::run_selfcheck(o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = true;
    for (const auto& r : results) {
        ok &= r.passed;
        out << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(36) << r.name << std::setw(14)
            << std::setprecision(4) << r.value << r.detail << "\n";
    }
    out << (ok ? "all checks passed" : "SELFCHECK FAILED") << " (" << results.size() << " checks, "
        << std::setprecision(3) << secs << " s)\n";
    return ok ? kOk : kCheckFailed;
}

int exit_code(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Config: return kConfigError;
        case ErrorKind::Numeric: return kDivergence;
        default: return kDataError;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"onecast: tokenized trend + seasonal-basis forecaster", "onecast"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "onecast 0.1.0");

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Normalize and split a CSV into trend and season");
    c_dec->add_option("-i,--input", dec.input, "Input CSV")->required();
    c_dec->add_option("-c,--config", dec.config, "Run config (INI)");
    c_dec->add_option("-n,--ma", dec.moving_average, "Moving-average window (overrides config)");
    c_dec->add_option("-o,--output", dec.output, "Output directory");
    c_dec->add_option("--set", dec.set, "Override section.key=value");

    VerifyArgs ver;
    auto* c_ver = app.add_subcommand("verify", "Check that a decomposition sums back to the normalized input");
    c_ver->add_option("-i,--input", ver.input, "Input CSV given to decompose")->required();
    c_ver->add_option("-d,--dir", ver.dir, "decompose output directory")->required();
    c_ver->add_option("--tolerance", ver.tolerance, "Maximum absolute error");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train stage one, stage two or both");
    c_tr->add_option("-c,--config", tr.config, "Run config (INI)");
    c_tr->add_option("--dataset", tr.datasets, "Extra dataset id=path");
    c_tr->add_option("--stage", tr.stage, "joint, diffusion or both");
    c_tr->add_option("--checkpoint", tr.checkpoint, "Joint checkpoint to continue from (--stage diffusion)");
    c_tr->add_option("--seed", tr.seed, "Master seed");
    c_tr->add_option("--epochs", tr.epochs, "Stage-one epochs");
    c_tr->add_option("--diffusion-epochs", tr.diffusion_epochs, "Stage-two epochs");
    c_tr->add_option("-o,--output", tr.output, "Output directory");
    c_tr->add_option("--set", tr.set, "Override section.key=value");

    ForecastArgs fc;
    auto* c_fc = app.add_subcommand("forecast", "Forecast the window after the last L_h rows of a CSV");
    c_fc->add_option("--checkpoint", fc.checkpoint, "Trained checkpoint")->required();
    c_fc->add_option("-i,--input", fc.input, "Input CSV")->required();
    c_fc->add_option("--domain", fc.domain, "Domain id (needed for multi-domain checkpoints)");
    c_fc->add_option("--horizon", fc.horizon, "Expected horizon; must match the checkpoint");
    c_fc->add_option("--steps", fc.steps, "Denoising rounds (default from checkpoint)");
    c_fc->add_flag("--seasonal-only", fc.seasonal_only, "Drop the trend branch");
    c_fc->add_option("-o,--output", fc.output, "Forecast CSV path");
    c_fc->add_option("--plot", fc.plot, "Write an SVG plot of channel 0");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Metrics over the test split");
    c_ev->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required();
    c_ev->add_option("-i,--input", ev.input, "Dataset CSV");
    c_ev->add_option("-c,--config", ev.config, "Run config supplying dataset path and split");
    c_ev->add_option("--domain", ev.domain, "Domain id");
    c_ev->add_option("--horizons", ev.horizons, "Comma-separated prefix horizons");
    c_ev->add_option("--steps", ev.steps, "Denoising rounds");
    c_ev->add_option("--stride", ev.stride, "Window stride (default from checkpoint)");
    c_ev->add_flag("--self-truth", ev.self_truth, "Score the truth against itself");
    c_ev->add_flag("--seasonal-only", ev.seasonal_only, "Seasonal-only ablation");
    c_ev->add_option("-o,--output", ev.output, "Output directory");

    BudgetArgs bu;
    auto* c_bu = app.add_subcommand("budget", "Token counts of different tokenization schemes");
    c_bu->add_option("--method", bu.method, "patching, per_value, text, onecast or all");
    c_bu->add_option("--length", bu.length, "Window length L");
    c_bu->add_option("--patch", bu.patch, "Patch length P");
    c_bu->add_option("--channels", bu.channels, "Channels C");
    c_bu->add_option("--text-tokens", bu.text_tokens, "Text tokens per value k");
    c_bu->add_option("--vocab", bu.vocab, "Seasonal vocabulary M");
    c_bu->add_flag("--table", bu.table, "Print the four reference datasets");

    pipeline::SelfcheckOptions sc;
    auto* c_sc = app.add_subcommand("selfcheck", "Gradient and oracle checks");
    c_sc->add_option("--seeds", sc.gradient_seeds, "Random seeds per gradient case");
    c_sc->add_option("--tolerance", sc.gradient_tolerance, "Relative error bound");
    c_sc->add_option("--instances", sc.quantizer_instances, "Quantizer oracle instances");
    c_sc->add_option("--seed", sc.seed, "Base seed");
    c_sc->add_flag("--inject-fault", sc.inject_fault)->group("");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (c_dec->parsed()) return cmd_decompose(dec, out);
        if (c_ver->parsed()) return cmd_verify(ver, out);
        if (c_tr->parsed()) return cmd_train(tr, out);
        if (c_fc->parsed()) return cmd_forecast(fc, out);
        if (c_ev->parsed()) return cmd_eval(ev, out);
        if (c_bu->parsed()) return cmd_budget(bu, out);
        if (c_sc->parsed()) return cmd_selfcheck(sc, out);
    } catch (const DivergenceError& e) {
        err << "error: training diverged at step " << e.step() << ": " << e.what() << "\n";
        return kDivergence;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kConfigError;
}

}  // namespace onecast::cli
