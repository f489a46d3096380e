#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groundpoint/model.hpp"

namespace gp {

// Layout: "GPCKPT01", u64 little-endian manifest length, JSON manifest, then
// little-endian float32 tensor data (column-major) at the manifest offsets.

struct ManifestEntry {
    std::string name;
    std::vector<std::int64_t> shape; // rows, cols
    std::string dtype = "f32";
    std::uint64_t offset = 0;        // bytes from the start of the data section
};

struct CheckpointInfo {
    ModelConfig config;
    std::vector<ManifestEntry> tensors;
    std::string extra; // free-form JSON object stored with the run
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const Model& model, const std::string& extra_json = "{}");
CheckpointInfo read_checkpoint_info(const std::string& path);
Model load_checkpoint(const std::string& path);

} // namespace gp
