#include "onecast/cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "onecast/error.hpp"

namespace onecast::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

double to_double(const std::string& section, const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size()) {
        throw ConfigError(where(section, key) + ": '" + v + "' is not a number");
    }
    return out;
}

std::uint64_t to_u64(const std::string& section, const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size()) {
        throw ConfigError(where(section, key) + ": '" + v + "' is not a non-negative integer");
    }
    return out;
}

std::size_t to_size(const std::string& section, const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(to_u64(section, key, v));
}

bool to_bool(const std::string& section, const std::string& key, const std::string& v) {
    std::string t = trim(v);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(where(section, key) + ": '" + v + "' is not a boolean");
}

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& section, const std::string& key, const std::string&)>;

#define SIZE_FIELD(member) [](RunConfig& c, auto& s, auto& k, auto& v) { c.member = to_size(s, k, v); }
#define DOUBLE_FIELD(member) [](RunConfig& c, auto& s, auto& k, auto& v) { c.member = to_double(s, k, v); }

const std::map<std::string, Setter>& model_fields() {
    static const std::map<std::string, Setter> m{
        {"history", SIZE_FIELD(model.history)},
        {"horizon", SIZE_FIELD(model.horizon)},
        {"moving_average", SIZE_FIELD(model.moving_average)},
        {"epsilon", DOUBLE_FIELD(model.epsilon)},
        {"natural_periods", [](RunConfig& c, auto&, auto&, auto& v) { c.model.natural_periods = parse_list(v); }},
        {"basis_periods", [](RunConfig& c, auto&, auto&, auto& v) { c.model.basis_periods = parse_list(v); }},
        {"seasonal_hidden", SIZE_FIELD(model.seasonal_hidden)},
        {"codebook_size", SIZE_FIELD(model.tokenizer.codebook_size)},
        {"code_dim", SIZE_FIELD(model.tokenizer.code_dim)},
        {"beta", DOUBLE_FIELD(model.tokenizer.beta)},
        {"patch_len", SIZE_FIELD(model.tokenizer.patch_len)},
        {"wave_len", SIZE_FIELD(model.tokenizer.wave_len)},
        {"tokenizer_hidden", SIZE_FIELD(model.tokenizer.hidden)},
        {"tokenizer_blocks", SIZE_FIELD(model.tokenizer.blocks)},
        {"tokenizer_kernel", SIZE_FIELD(model.tokenizer.kernel)},
        {"predictor_hidden", SIZE_FIELD(model.predictor_hidden)},
        {"predictor_layers", SIZE_FIELD(model.predictor_layers)},
        {"predictor_heads", SIZE_FIELD(model.predictor_heads)},
        {"predictor_ff_mult", SIZE_FIELD(model.predictor_ff_mult)},
        {"dual_decoder", [](RunConfig& c, auto& s, auto& k, auto& v) { c.model.dual_decoder = to_bool(s, k, v); }},
    };
    return m;
}

const std::map<std::string, Setter>& train_fields() {
    static const std::map<std::string, Setter> m{
        {"lr", DOUBLE_FIELD(train.lr)},
        {"weight_decay", DOUBLE_FIELD(train.weight_decay)},
        {"lr_decay_factor", DOUBLE_FIELD(train.lr_decay_factor)},
        {"lr_decay_every_steps", SIZE_FIELD(train.lr_decay_every_steps)},
        {"epochs", SIZE_FIELD(train.epochs)},
        {"gamma", DOUBLE_FIELD(train.gamma)},
        {"seed", [](RunConfig& c, auto& s, auto& k, auto& v) { c.train.seed = to_u64(s, k, v); }},
        {"batch_size", SIZE_FIELD(train.batch_size)},
        {"window_stride", SIZE_FIELD(train.window_stride)},
        {"stage", [](RunConfig& c, auto&, auto&, auto& v) { c.train.stage = pipeline::parse_stage(trim(v)); }},
        {"diffusion_lr", DOUBLE_FIELD(train.diffusion_lr)},
        {"diffusion_epochs", SIZE_FIELD(train.diffusion_epochs)},
        {"scheduler",
         [](RunConfig& c, auto&, auto&, auto& v) { c.train.scheduler = diffusion::parse_scheduler(trim(v)); }},
        {"inference_steps", SIZE_FIELD(train.inference_steps)},
        {"abandon_threshold", DOUBLE_FIELD(train.abandon_threshold)},
        {"split_train", DOUBLE_FIELD(split.train)},
        {"split_val", DOUBLE_FIELD(split.val)},
        {"split_test", DOUBLE_FIELD(split.test)},
    };
    return m;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD

data::DatasetSpec& dataset(RunConfig& cfg, const std::string& id) {
    for (auto& d : cfg.datasets) {
        if (d.domain_id == id) return d;
    }
    data::DatasetSpec d;
    d.domain_id = id;
    d.split = cfg.split;
    cfg.datasets.push_back(d);
    return cfg.datasets.back();
}

void set_dataset_field(data::DatasetSpec& d, const std::string& section, const std::string& key,
                       const std::string& value) {
    if (key == "path") {
        d.path = trim(value);
    } else if (key == "sampling_period") {
        d.sampling_period = trim(value);
    } else if (key == "natural_periods") {
        d.natural_periods = parse_list(value);
    } else if (key == "train") {
        d.split.train = to_double(section, key, value);
    } else if (key == "val") {
        d.split.val = to_double(section, key, value);
    } else if (key == "test") {
        d.split.test = to_double(section, key, value);
    } else {
        throw ConfigError(where(section, key) + ": unknown key");
    }
}

}  // namespace

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(to_double("list", "item", item));
    }
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(to_size("list", "item", item));
    }
    return out;
}

void set_field(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
    if (section == "model" || section == "train") {
        const auto& fields = section == "model" ? model_fields() : train_fields();
        const auto it = fields.find(key);
        if (it == fields.end()) throw ConfigError(where(section, key) + ": unknown key");
        it->second(cfg, section, key, value);
    } else if (section == "output") {
        if (key != "dir") throw ConfigError(where(section, key) + ": unknown key");
        cfg.output_dir = trim(value);
    } else if (section.rfind("dataset.", 0) == 0 && section.size() > 8) {
        set_dataset_field(dataset(cfg, section.substr(8)), section, key, value);
    } else {
        throw ConfigError("unknown config section [" + section + "]");
    }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const std::string lhs = trim(assignment.substr(0, eq));
    const auto dot = lhs.rfind('.');
    if (eq == std::string::npos || dot == std::string::npos || dot == 0 || dot + 1 == lhs.size()) {
        throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    }
    set_field(cfg, lhs.substr(0, dot), lhs.substr(dot + 1), assignment.substr(eq + 1));
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    RunConfig cfg;
    bool model_periods = false;
    // Split fractions in [train] are defaults for datasets, so read them first.
    for (const auto& [section, body] : tree) {
        if (section == "train") {
            for (const auto& [key, value] : body) {
                if (key.rfind("split_", 0) == 0) set_field(cfg, section, key, value.data());
            }
        }
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(source + ": key '" + section + "' outside any section");
        }
        for (const auto& [key, value] : body) {
            if (section == "train" && key.rfind("split_", 0) == 0) continue;
            model_periods |= section == "model" && key == "natural_periods";
            try {
                set_field(cfg, section, key, value.data());
            } catch (const ConfigError& e) {
                throw ConfigError(source + ": " + e.what());
            }
        }
    }
    if (!model_periods) {
        std::set<double> periods;
        for (const auto& d : cfg.datasets) periods.insert(d.natural_periods.begin(), d.natural_periods.end());
        if (!periods.empty()) cfg.model.natural_periods.assign(periods.begin(), periods.end());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_run_config(in, path);
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    split.validate();
    if (output_dir.empty()) throw ConfigError("[output] dir must not be empty");
    std::set<std::string> ids;
    for (const auto& d : datasets) {
        if (!ids.insert(d.domain_id).second) throw ConfigError("duplicate dataset '" + d.domain_id + "'");
        d.validate();
    }
}

std::string to_ini(const RunConfig& c) {
    const auto& m = c.model;
    const auto& t = c.train;
    std::ostringstream os;
    os << "[model]\n"
       << "history = " << m.history << "\nhorizon = " << m.horizon << "\nmoving_average = " << m.moving_average
       << "\nepsilon = " << fmt(m.epsilon) << "\nnatural_periods = " << fmt_list(m.natural_periods)
       << "\nbasis_periods = " << fmt_list(m.basis_periods) << "\nseasonal_hidden = " << m.seasonal_hidden
       << "\ncodebook_size = " << m.tokenizer.codebook_size << "\ncode_dim = " << m.tokenizer.code_dim
       << "\nbeta = " << fmt(m.tokenizer.beta) << "\npatch_len = " << m.tokenizer.patch_len
       << "\nwave_len = " << m.tokenizer.wave_len << "\ntokenizer_hidden = " << m.tokenizer.hidden
       << "\ntokenizer_blocks = " << m.tokenizer.blocks << "\ntokenizer_kernel = " << m.tokenizer.kernel
       << "\npredictor_hidden = " << m.predictor_hidden << "\npredictor_layers = " << m.predictor_layers
       << "\npredictor_heads = " << m.predictor_heads << "\npredictor_ff_mult = " << m.predictor_ff_mult
       << "\ndual_decoder = " << (m.dual_decoder ? "true" : "false") << "\n\n[train]\n"
       << "lr = " << fmt(t.lr) << "\nweight_decay = " << fmt(t.weight_decay)
       << "\nlr_decay_factor = " << fmt(t.lr_decay_factor) << "\nlr_decay_every_steps = " << t.lr_decay_every_steps
       << "\nepochs = " << t.epochs << "\ngamma = " << fmt(t.gamma) << "\nseed = " << t.seed
       << "\nbatch_size = " << t.batch_size << "\nwindow_stride = " << t.window_stride
       << "\nstage = " << pipeline::to_string(t.stage) << "\ndiffusion_lr = " << fmt(t.diffusion_lr)
       << "\ndiffusion_epochs = " << t.diffusion_epochs << "\nscheduler = " << diffusion::to_string(t.scheduler)
       << "\ninference_steps = " << t.inference_steps << "\nabandon_threshold = " << fmt(t.abandon_threshold)
       << "\nsplit_train = " << fmt(c.split.train)
       << "\nsplit_val = " << fmt(c.split.val) << "\nsplit_test = " << fmt(c.split.test) << "\n\n[output]\ndir = "
       << c.output_dir << "\n";
    for (const auto& d : c.datasets) {
        os << "\n[dataset." << d.domain_id << "]\npath = " << d.path << "\n";
        if (!d.sampling_period.empty()) os << "sampling_period = " << d.sampling_period << "\n";
        if (!d.natural_periods.empty()) os << "natural_periods = " << fmt_list(d.natural_periods) << "\n";
        os << "train = " << fmt(d.split.train) << "\nval = " << fmt(d.split.val) << "\ntest = " << fmt(d.split.test)
           << "\n";
    }
    return os.str();
}

}  // namespace onecast::cli
