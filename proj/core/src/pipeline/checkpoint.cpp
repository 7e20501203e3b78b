#include "onecast/pipeline/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "onecast/error.hpp"

namespace onecast::pipeline {

namespace {

constexpr std::array<char, 8> kMagic{'O', 'C', 'K', 'P', 'T', '\r', '\n', '\x1a'};
constexpr std::uint64_t kMaxHeader = 1ull << 30;

template <typename T>
void put(std::ostream& out, T v) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw CheckpointError(source + ": truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& source, std::uint64_t limit) {
    const auto n = get<std::uint64_t>(in, source);
    if (n > limit) throw CheckpointError(source + ": section length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError(source + ": truncated checkpoint");
    return s;
}

nlohmann::json header_of(const Model& m) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [id, p] : m.params) params.push_back({{"id", id}, {"shape", p.value.shape()}});
    nlohmann::json domains = nlohmann::json::object();
    for (const auto& [id, c] : m.domains) domains[id] = c;
    return {{"format", "onecast-checkpoint"},
            {"schema_version", kCheckpointVersion},
            {"model", to_json(m.config)},
            {"train", to_json(m.train)},
            {"basis", {{"frequencies", m.basis.frequencies}, {"steps_per_day", m.basis.steps_per_day}}},
            {"domains", domains},
            {"stages", {{"joint", m.joint_trained}, {"diffusion", m.diffusion_trained}}},
            {"metadata", m.metadata},
            {"abandoned_tokens", m.abandoned_tokens},
            {"parameters", params}};
}

nlohmann::json read_header(std::istream& in, const std::string& source) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw CheckpointError(source + ": not a checkpoint file (bad magic)");
    }
    const auto version = get<std::uint32_t>(in, source);
    if (version != kCheckpointVersion) {
        throw CheckpointError(source + ": unsupported schema version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const std::string text = get_string(in, source, kMaxHeader);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(source + ": corrupt header: " + e.what());
    }
}

}  // namespace

void save_checkpoint(const Model& model, std::ostream& out) {
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, header_of(model).dump());
    for (const auto& [id, p] : model.params) {
        put_string(out, id);
        put<std::uint64_t>(out, p.value.size());
        for (double v : p.value.values()) put<double>(out, v);
    }
    if (!out) throw CheckpointError("checkpoint write failed");
}

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
    save_checkpoint(model, out);
    out.flush();
    if (!out) throw CheckpointError("write to '" + path + "' failed");
}

Model load_checkpoint(std::istream& in, const std::string& source) {
    const nlohmann::json h = read_header(in, source);
    Model m;
    try {
        m.config = model_config_from_json(h.at("model"));
        m.config.validate();
        m.train = train_config_from_json(h.at("train"));
        m.basis.frequencies = h.at("basis").at("frequencies").get<std::vector<double>>();
        m.basis.steps_per_day = h.at("basis").at("steps_per_day").get<double>();
        for (const auto& [id, c] : h.at("domains").items()) m.domains[id] = c.get<std::size_t>();
        m.joint_trained = h.at("stages").at("joint").get<bool>();
        m.diffusion_trained = h.at("stages").at("diffusion").get<bool>();
        m.metadata = h.at("metadata");
        m.abandoned_tokens = h.value("abandoned_tokens", std::vector<int>{});
        for (int id : m.abandoned_tokens) {
            if (id < 0 || static_cast<std::size_t>(id) >= m.config.tokenizer.codebook_size) {
                throw CheckpointError("checkpoint: abandoned token id " + std::to_string(id) + " out of range");
            }
        }
        for (const auto& entry : h.at("parameters")) {
            const auto id = entry.at("id").get<std::string>();
            const auto shape = entry.at("shape").get<numerics::Shape>();
            const std::string stored = get_string(in, source, 1 << 16);
            if (stored != id) throw CheckpointError(source + ": expected parameter '" + id + "', found '" + stored + "'");
            const auto count = get<std::uint64_t>(in, source);
            if (count != numerics::shape_size(shape)) {
                throw CheckpointError(source + ": parameter '" + id + "' has " + std::to_string(count) +
                                      " values, shape " + numerics::shape_string(shape) + " needs " +
                                      std::to_string(numerics::shape_size(shape)));
            }
            std::vector<double> values(count);
            for (double& v : values) v = get<double>(in, source);
            m.params.create(id, Tensor(shape, std::move(values)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(source + ": malformed header: " + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(source + ": invalid stored config: " + e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(source + ": trailing bytes after parameters");
    return m;
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    return load_checkpoint(in, path);
}

nlohmann::json read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    return read_header(in, path);
}

}  // namespace onecast::pipeline
