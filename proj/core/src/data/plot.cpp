#include "onecast/data/plot.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace onecast::data {

std::string forecast_svg(const numerics::Tensor& history, const numerics::Tensor& truth,
                         const numerics::Tensor& forecast, std::size_t channel) {
    constexpr double kWidth = 800, kHeight = 300, kPad = 20;
    const std::size_t n_hist = history.empty() ? 0 : history.rows();
    const std::size_t n_future = std::max(truth.empty() ? 0 : truth.rows(), forecast.empty() ? 0 : forecast.rows());
    const std::size_t total = std::max<std::size_t>(n_hist + n_future, 2);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const numerics::Tensor* t : {&history, &truth, &forecast}) {
        if (t->empty() || channel >= t->cols()) continue;
        for (std::size_t r = 0; r < t->rows(); ++r) {
            lo = std::min(lo, (*t)(r, channel));
            hi = std::max(hi, (*t)(r, channel));
        }
    }
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    auto x = [&](std::size_t i) { return kPad + (kWidth - 2 * kPad) * static_cast<double>(i) / (total - 1); };
    auto y = [&](double v) { return kHeight - kPad - (kHeight - 2 * kPad) * (v - lo) / (hi - lo); };

    std::ostringstream os;
    os << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kWidth << R"(" height=")" << kHeight << R"(">)"
       << '\n';
    auto line = [&](const numerics::Tensor& t, std::size_t offset, const char* color) {
        if (t.empty() || channel >= t.cols()) return;
        os << R"(  <polyline fill="none" stroke=")" << color << R"(" stroke-width="1.5" points=")";
        for (std::size_t r = 0; r < t.rows(); ++r) os << (r ? " " : "") << x(offset + r) << ',' << y(t(r, channel));
        os << "\"/>\n";
    };
    line(history, 0, "#888888");
    line(truth, n_hist, "#1f77b4");
    line(forecast, n_hist, "#d62728");
    os << "</svg>\n";
    return os.str();
}

}  // namespace onecast::data
