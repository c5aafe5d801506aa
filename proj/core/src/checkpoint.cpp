#include "dalm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dalm/errors.hpp"

namespace dalm {
namespace {

constexpr char kMagic[4] = {'D', 'A', 'L', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated while reading " + what);
    return v;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const NamedTensor& Checkpoint::require(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (!t) throw DataError("checkpoint: missing tensor '" + name + "'");
    return *t;
}

void write_checkpoint(const std::string& path, const std::string& header_json,
                      const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open for write: " + path);

    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kFormatVersion);
    write_pod<std::uint64_t>(os, header_json.size());
    os.write(header_json.data(), static_cast<std::streamsize>(header_json.size()));

    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xffff)
            throw DataError("checkpoint: tensor name too long: " + t.name);
        write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_pod<std::uint8_t>(os, 0);  // dtype f32
        write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
        std::size_t numel = 1;
        for (long d : t.shape) {
            if (d < 0) throw DataError("checkpoint: negative dim in " + t.name);
            write_pod<std::int64_t>(os, d);
            numel *= static_cast<std::size_t>(d);
        }
        if (numel != t.data.size())
            throw DataError("checkpoint: shape/data mismatch in " + t.name);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    os.flush();
    if (!os) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(is, "version");
    if (version != kFormatVersion)
        throw DataError("checkpoint: unsupported format version " +
                        std::to_string(version));

    const auto header_len = read_pod<std::uint64_t>(is, "header length");
    Checkpoint ckpt;
    ckpt.header_json.resize(header_len);
    is.read(ckpt.header_json.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw DataError("checkpoint: truncated header in " + path);

    const auto count = read_pod<std::uint32_t>(is, "tensor count");
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const auto name_len = read_pod<std::uint16_t>(is, "tensor name length");
        t.name.resize(name_len);
        is.read(t.name.data(), name_len);
        if (!is) throw DataError("checkpoint: truncated tensor name");
        const auto dtype = read_pod<std::uint8_t>(is, "dtype");
        if (dtype != 0)
            throw DataError("checkpoint: unsupported dtype in " + t.name);
        const auto ndim = read_pod<std::uint8_t>(is, "rank");
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const auto dim = read_pod<std::int64_t>(is, "dim");
            if (dim < 0) throw DataError("checkpoint: negative dim in " + t.name);
            t.shape.push_back(static_cast<long>(dim));
            numel *= static_cast<std::size_t>(dim);
        }
        t.data.resize(numel);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!is) throw DataError("checkpoint: truncated payload in " + t.name);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

std::vector<NamedTensor> snapshot_registry(const nn::ParamRegistry<float>& reg) {
    std::vector<NamedTensor> out;
    out.reserve(reg.size());
    for (const auto& p : reg) {
        NamedTensor t;
        t.name = p->name;
        t.shape = p->value.shape;
        t.data = p->value.v;
        out.push_back(std::move(t));
    }
    return out;
}

void load_registry(nn::ParamRegistry<float>& reg, const Checkpoint& ckpt) {
    for (const auto& p : reg) {
        const NamedTensor& t = ckpt.require(p->name);
        if (t.shape != p->value.shape)
            throw DataError("checkpoint: shape mismatch for '" + p->name + "'");
        p->value.v = t.data;
    }
}

std::string model_config_to_json(const nn::ModelConfig& cfg) {
    nlohmann::json j;
    j["layers"] = cfg.layers;
    j["hidden_dim"] = cfg.hidden_dim;
    j["heads"] = cfg.heads;
    j["ffn_dim"] = cfg.ffn_dim;
    j["max_seq_len"] = cfg.max_seq_len;
    j["vocab_size"] = cfg.vocab_size;
    j["dropout_rate"] = cfg.dropout_rate;
    return j.dump();
}

nn::ModelConfig model_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config: bad JSON: ") + e.what());
    }
    nn::ModelConfig cfg;
    try {
        cfg.layers = j.at("layers").get<int>();
        cfg.hidden_dim = j.at("hidden_dim").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.ffn_dim = j.at("ffn_dim").get<int>();
        cfg.max_seq_len = j.at("max_seq_len").get<int>();
        cfg.vocab_size = j.at("vocab_size").get<int>();
        cfg.dropout_rate = j.value("dropout_rate", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config: missing field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace dalm
