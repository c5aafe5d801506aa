#pragma once

#include <string>
#include <vector>

#include "dalm/nn/encoder.hpp"

namespace dalm {

// Checkpoint container: magic "DALM", u32 format version, a JSON header
// (model configs + metadata), then named float32 tensors with explicit
// shapes, payload little-endian. Tensor names follow the scheme documented
// in the README ("emb.tok", "blk0.attn.wq", ..., and "sub.sv." / "main." /
// "score.sv" / "fusion." prefixes for combined models).
struct NamedTensor {
    std::string name;
    std::vector<long> shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::string header_json;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
    const NamedTensor& require(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const std::string& header_json,
                      const std::vector<NamedTensor>& tensors);
Checkpoint read_checkpoint(const std::string& path);

// Registry <-> tensor list. Loading enforces exact shape agreement.
std::vector<NamedTensor> snapshot_registry(const nn::ParamRegistry<float>& reg);
void load_registry(nn::ParamRegistry<float>& reg, const Checkpoint& ckpt);

std::string model_config_to_json(const nn::ModelConfig& cfg);
nn::ModelConfig model_config_from_json(const std::string& json_text);

}  // namespace dalm
