#pragma once

#include <string>
#include <vector>

#include "onecast/data/dataset.hpp"
#include "onecast/pipeline/config.hpp"

namespace onecast::cli {

/// Everything a run needs, read from one INI file and then overridden by
/// flags. Sections: [model], [train], [output] and one [dataset.<id>] per
/// domain.
struct RunConfig {
    pipeline::ModelConfig model;
    pipeline::TrainConfig train;
    std::vector<data::DatasetSpec> datasets;
    data::SplitFractions split;
    std::string output_dir = "onecast_out";

    /// Throws ConfigError on the first invalid field.
    void validate() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");

/// Applies "section.key=value". Unknown keys are a ConfigError.
void apply_override(RunConfig& cfg, const std::string& assignment);
void set_field(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

/// Canonical INI text, every field included; parse_run_config reads it back.
std::string to_ini(const RunConfig& cfg);

std::vector<double> parse_list(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace onecast::cli
