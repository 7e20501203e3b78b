#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "onecast/pipeline/model.hpp"

namespace onecast::pipeline {

// Layout (.ockpt), integers little-endian:
//   8 bytes   magic "OCKPT\r\n\x1a"
//   u32       schema version
//   u64 + n   JSON header: configs, basis, domains, stages, metadata,
//             parameter ids and shapes
//   per parameter, in header order:
//     u64 + n  id
//     u64      element count
//     f64 * count
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(std::istream& in, const std::string& source = "<stream>");
Model load_checkpoint(const std::string& path);

/// Header only, without reading parameter data.
nlohmann::json read_checkpoint_header(const std::string& path);

}  // namespace onecast::pipeline
