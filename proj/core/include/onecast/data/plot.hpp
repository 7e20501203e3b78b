#pragma once

#include <cstddef>
#include <string>

#include "onecast/numerics/tensor.hpp"

namespace onecast::data {

/// Line plot of one channel: history (grey), truth (blue, optional) and
/// forecast (red) as a standalone SVG document. Empty tensors are skipped.
std::string forecast_svg(const numerics::Tensor& history, const numerics::Tensor& truth,
                         const numerics::Tensor& forecast, std::size_t channel = 0);

}  // namespace onecast::data
