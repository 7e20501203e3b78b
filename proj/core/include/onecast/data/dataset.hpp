#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "onecast/numerics/tensor.hpp"

namespace onecast::data {

using numerics::Tensor;

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    void validate() const;
};

struct DatasetSpec {
    std::string path;
    std::string domain_id;
    std::string sampling_period;  // free-form, e.g. "1h", "30min"
    std::vector<double> natural_periods;
    SplitFractions split;

    void validate() const;
};

/// Reads a rectangular numeric table. A header row is skipped when its cells
/// are not numeric, and a leading ISO-8601 timestamp column is dropped.
Tensor load_csv(const std::string& path);
Tensor parse_csv(std::istream& in, const std::string& source = "<stream>");
inline Tensor load_csv(const DatasetSpec& spec) { return load_csv(spec.path); }

/// Shortest round-trip decimal form, one row per line.
void write_csv(std::ostream& out, const Tensor& values, const std::vector<std::string>& header = {});
void write_csv(const std::string& path, const Tensor& values, const std::vector<std::string>& header = {});

struct WindowPair {
    Tensor history;  // L_h x C
    Tensor future;   // L_f x C
    std::size_t start = 0;  // row of the first history step in the full series
};

/// Every (history, future) pair at the given stride, chronological.
std::vector<WindowPair> make_windows(const Tensor& series, std::size_t history, std::size_t horizon,
                                     std::size_t stride);

struct WindowSplits {
    std::vector<WindowPair> train;
    std::vector<WindowPair> val;
    std::vector<WindowPair> test;
    std::size_t train_end = 0;  // first row outside the training region
    std::size_t val_end = 0;
};

/// Chronological train/val/test regions; each pair lies entirely inside one.
WindowSplits make_split_windows(const Tensor& series, std::size_t history, std::size_t horizon, std::size_t stride,
                                const SplitFractions& split);

}  // namespace onecast::data
