#include "onecast/data/dataset.hpp"

#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include "onecast/error.hpp"

namespace onecast::data {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\"");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e;
}

bool looks_like_timestamp(const std::string& s) {
    static const std::regex iso(R"(^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$)");
    return std::regex_match(s, iso);
}

}  // namespace

void SplitFractions::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ConfigError("split fractions must all be positive");
    if (train + val + test > 1.0 + 1e-12) throw ConfigError("split fractions sum to more than 1");
}

void DatasetSpec::validate() const {
    if (domain_id.empty()) throw ConfigError("dataset: domain id is empty");
    if (path.empty()) throw ConfigError("dataset '" + domain_id + "': no path");
    split.validate();
}

Tensor parse_csv(std::istream& in, const std::string& source) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        rows.push_back(split_line(line));
        line_numbers.push_back(line_no);
    }
    if (rows.empty()) throw DataError(source + ": empty file");

    const std::size_t width = rows.front().size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != width) {
            throw DataError(source + ": line " + std::to_string(line_numbers[r]) + " has " +
                            std::to_string(rows[r].size()) + " cells, expected " + std::to_string(width));
        }
    }

    std::size_t first_row = 0;
    double scratch = 0.0;
    // Header: the last cell of the first row is not a number.
    if (!parse_double(rows.front().back(), scratch)) first_row = 1;
    if (first_row >= rows.size()) throw DataError(source + ": no data rows");

    const bool drop_first_col = width > 1 && looks_like_timestamp(rows[first_row].front());
    const std::size_t col0 = drop_first_col ? 1 : 0;
    const std::size_t channels = width - col0;
    const std::size_t n = rows.size() - first_row;

    Tensor out({n, channels});
    for (std::size_t r = 0; r < n; ++r) {
        const auto& cells = rows[first_row + r];
        for (std::size_t c = 0; c < channels; ++c) {
            double v = 0.0;
            if (!parse_double(cells[col0 + c], v)) {
                throw DataError(source + ": non-numeric cell '" + cells[col0 + c] + "' at line " +
                                std::to_string(line_numbers[first_row + r]) + ", column " +
                                std::to_string(col0 + c + 1));
            }
            out(r, c) = v;
        }
    }
    return out;
}

Tensor load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return parse_csv(in, path);
}

void write_csv(std::ostream& out, const Tensor& values, const std::vector<std::string>& header) {
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
    }
    char buf[64];
    for (std::size_t r = 0; r < values.rows(); ++r) {
        for (std::size_t c = 0; c < values.cols(); ++c) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), values(r, c));
            if (c) out << ',';
            out.write(buf, ptr - buf);
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const Tensor& values, const std::vector<std::string>& header) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_csv(out, values, header);
}

std::vector<WindowPair> make_windows(const Tensor& series, std::size_t history, std::size_t horizon,
                                     std::size_t stride) {
    if (history < 1 || horizon < 1 || stride < 1) throw ConfigError("make_windows: lengths and stride must be >= 1");
    const std::size_t total = series.rows();
    if (total < history + horizon) {
        throw DataError("series of " + std::to_string(total) + " steps is shorter than history + horizon = " +
                        std::to_string(history + horizon));
    }
    const std::size_t ch = series.cols();
    std::vector<WindowPair> out;
    for (std::size_t s = 0; s + history + horizon <= total; s += stride) {
        WindowPair w{Tensor({history, ch}), Tensor({horizon, ch}), s};
        std::copy_n(&series[s * ch], history * ch, w.history.values().data());
        std::copy_n(&series[(s + history) * ch], horizon * ch, w.future.values().data());
        out.push_back(std::move(w));
    }
    return out;
}

WindowSplits make_split_windows(const Tensor& series, std::size_t history, std::size_t horizon, std::size_t stride,
                                const SplitFractions& split) {
    split.validate();
    const std::size_t total = series.rows();
    if (total < history + horizon) {
        throw DataError("series of " + std::to_string(total) + " steps is shorter than history + horizon = " +
                        std::to_string(history + horizon));
    }
    // 0.7 + 0.1 is below 0.8 in binary; the slack keeps boundaries on whole rows.
    const auto boundary = [total](double fraction) {
        return std::min(total, static_cast<std::size_t>(static_cast<double>(total) * fraction + 1e-9));
    };
    WindowSplits out;
    out.train_end = boundary(split.train);
    out.val_end = boundary(split.train + split.val);
    const std::size_t test_end = boundary(split.train + split.val + split.test);

    auto region = [&](std::size_t begin, std::size_t end, std::vector<WindowPair>& dst) {
        if (end <= begin || end - begin < history + horizon) return;
        const std::size_t ch = series.cols();
        Tensor slab({end - begin, ch});
        std::copy_n(&series[begin * ch], (end - begin) * ch, slab.values().data());
        for (WindowPair& w : make_windows(slab, history, horizon, stride)) {
            w.start += begin;
            dst.push_back(std::move(w));
        }
    };
    region(0, out.train_end, out.train);
    region(out.train_end, out.val_end, out.val);
    region(out.val_end, test_end, out.test);
    return out;
}

}  // namespace onecast::data
